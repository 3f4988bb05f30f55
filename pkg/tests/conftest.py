from __future__ import annotations

import numpy as np
import pytest

from gammaruin.variance_models import (
    VarianceModel,
    brownian_model,
    exponential_correlation,
    integrated_model,
    multiplex_fbm_model,
    power_correlation,
    power_model,
    tabulated_correlation,
)


def _shipped():
    tab_t = np.linspace(0.0, 4.0, 41)
    return {
        "bm": brownian_model(),
        "fbm0.3": power_model(0.3),
        "mfbm[0.3,0.7]": multiplex_fbm_model([0.3, 0.7]),
        "mfbm[0.2,0.5,0.8]": multiplex_fbm_model([0.2, 0.5, 0.8]),
        "srd_exp": integrated_model(exponential_correlation(1.0)),
        "lrd_pow0.75": integrated_model(power_correlation(0.75)),
        "tabulated_srd": integrated_model(tabulated_correlation(tab_t, np.exp(-tab_t))),
    }


_MODELS = _shipped()


@pytest.fixture(scope="session")
def shipped_models() -> dict[str, VarianceModel]:
    return _MODELS


def shipped_model_ids() -> list[str]:
    return list(_MODELS)


def shipped_model(name: str) -> VarianceModel:
    return _MODELS[name]


def cubic_model() -> VarianceModel:
    """``sigma2(t) = t^3``: grows faster than ``t^2``."""
    return VarianceModel(
        sigma2=lambda t: np.asarray(t, dtype=float) ** 3,
        dsigma2=lambda t: 3 * np.asarray(t, dtype=float) ** 2,
        d2sigma2=lambda t: 6 * np.asarray(t, dtype=float),
        alpha0=1.0,
        alpha_inf=0.99,
        phi_class=multiplex_fbm_model([0.7]).phi_class,
        b_at_zero=multiplex_fbm_model([0.7]).b_at_zero,
        label="cubic",
    )


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get("acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
