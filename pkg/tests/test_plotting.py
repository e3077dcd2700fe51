import numpy as np

from eegemotion import plotting
from eegemotion.core import COMPONENTS, DEAP_CHANNELS, LOBES
from eegemotion.ensemble.metrics import report_from_confusion
from eegemotion.ensemble.sweep import SweepResult
from eegemotion.selection import ChannelRanking, CorrelationTable

PNG = b"\x89PNG\r\n\x1a\n"


def render_all(d):
    rng = np.random.default_rng(0)
    reports = {c: report_from_confusion(rng.integers(0, 20, (3, 3))) for c in COMPONENTS}
    ranking = ChannelRanking(DEAP_CHANNELS, rng.dirichlet(np.ones(32), 3).T)
    table = CorrelationTable(("delta", "gamma"), tuple(LOBES), rng.uniform(0, 0.3, (2, 6, 3)), np.zeros((2, 6, 3)), 2)
    sweep = SweepResult(COMPONENTS, [(n, (0.8, 0.9, 0.85), 0.85) for n in (25, 26)], 25, {})
    rows = [{"window_length_s": L, **{c: 0.5 for c in COMPONENTS}, "average": 0.5} for L in (2.0, 5.0)]
    return [
        plotting.confusion_figure(reports, d / "a.png"),
        plotting.eii_figure(ranking, ["T7", "T8"], d / "b.png"),
        plotting.correlation_figure(table, d / "c.png"),
        plotting.window_sweep_figure(rows, 5.0, d / "sub" / "d.png"),
        plotting.feature_sweep_figure(sweep, d / "e.png"),
    ]


def test_figures_are_png_and_reproducible(tmp_path):
    first = render_all(tmp_path / "one")
    second = render_all(tmp_path / "two")
    for a, b in zip(first, second):
        data = a.read_bytes()
        assert data.startswith(PNG) and len(data) > 1000
        assert data == b.read_bytes()
