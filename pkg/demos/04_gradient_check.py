"""
Finite-difference check of every head
=====================================

The same suite backs ``e2e-absa gradcheck``.
"""

from e2e_absa.gradcheck import suite

results = suite(dim_h=8, length=5)
for r in results:
    print(f"{r.name:18s} {r.error:9.2e} {'ok' if r.passed else 'FAIL'}")
print("total %.1fs" % sum(r.seconds for r in results))

# a deliberately broken gradient is caught
(bad,) = [r for r in suite(dim_h=4, length=3, corrupt="gru.head") if r.name == "gru.head"]
print("corrupted gru.head ->", "caught" if not bad.passed else "missed", "(%.2e)" % bad.error)
