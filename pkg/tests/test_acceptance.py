import pytest

from rsmetric.checks import ACCEPTANCE, run_check

from conftest import ACCEPTANCE_LINES

SEED = 42


@pytest.mark.parametrize("criterion", sorted(ACCEPTANCE))
def test_criterion(criterion):
    results = [run_check(fn, SEED) for fn in ACCEPTANCE[criterion]]
    ok = all(r.passed for r in results)
    parts = "; ".join(f"{r.check_id} error {r.error:.3e} tol {r.tolerance:.1e} "
                      f"({r.runtime_ms / 1000:.2f}s)" for r in results)
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} ({parts})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    for r in results:
        assert r.passed, f"{r.check_id}: error {r.error} > tolerance {r.tolerance} [{r.detail}]"
