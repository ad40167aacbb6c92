import math
import re
import xml.etree.ElementTree as ET

import pytest

from vqprobe.plots import NEG_LOG_P_CEILING, neg_log10_p, report_figures, training_figures

NS = {"s": "http://www.w3.org/2000/svg"}


def _parse(svg):
    return ET.fromstring(svg)


def _by_class(root, tag, cls):
    return [e for e in root.iter(f"{{{NS['s']}}}{tag}") if cls in e.get("class", "").split()]


def _report(ps):
    return {
        "thresholds": {"p_max": 0.01},
        "h2": [{"name": f"iv{i}", "condition_a": "a", "condition_b": "b", "counts": [[3, 1, 0], [0, 2, 2]], "p": p}
               for i, p in enumerate(ps)],
    }


def test_training_figures_structure():
    figs = training_figures([1, 2, 3, 4], [0.5, 0.3, 0.2, 0.2], [6.0, 5.0, 4.5, 4.4], K=8)
    assert set(figs) == {"loss.svg", "perplexity.svg"}
    loss = _parse(figs["loss.svg"])
    assert len(_by_class(loss, "polyline", "series")) == 1
    assert not _by_class(loss, "line", "reference")
    ppl = _parse(figs["perplexity.svg"])
    (threshold,) = _by_class(ppl, "line", "threshold")
    (maximum,) = _by_class(ppl, "line", "maximum")
    assert float(threshold.get("data-value")) == pytest.approx(3.2)
    assert float(maximum.get("data-value")) == 8.0
    # higher values sit higher on the canvas
    assert float(maximum.get("y1")) < float(threshold.get("y1"))
    points = _by_class(ppl, "polyline", "series")[0].get("points").split()
    assert len(points) == 4


def test_training_figures_empty():
    with pytest.raises(ValueError):
        training_figures([], [], [])


def test_p_at_threshold_touches_reference_line():
    root = _parse(report_figures(_report([0.01]))["significance.svg"])
    (bar,) = _by_class(root, "rect", "bar")
    (ref,) = _by_class(root, "line", "threshold")
    assert float(ref.get("data-value")) == pytest.approx(2.0)
    assert float(bar.get("data-value")) == pytest.approx(2.0)
    assert float(bar.get("y")) == pytest.approx(float(ref.get("y1")), abs=0.01)


def test_report_figures_structure():
    figs = report_figures(_report([1e-5, 0.3]))
    assert set(figs) == {"symbols_iv0.svg", "symbols_iv1.svg", "significance.svg"}
    hist = _parse(figs["symbols_iv0.svg"])
    assert len(_by_class(hist, "rect", "bar")) == 2 * 3
    sig = _parse(figs["significance.svg"])
    bars = _by_class(sig, "rect", "bar")
    assert [float(b.get("data-value")) for b in bars] == pytest.approx([5.0, -math.log10(0.3)])


def test_neg_log_p_is_capped():
    assert neg_log10_p(0.0) == NEG_LOG_P_CEILING
    assert neg_log10_p(1e-300) == NEG_LOG_P_CEILING
    assert neg_log10_p(1.0) == 0.0


def test_text_is_escaped():
    figs = report_figures({"h2": [{"name": "a<b", "condition_a": "x&y", "condition_b": "z",
                                   "counts": [[1, 0], [0, 1]], "p": 0.5}]})
    for svg in figs.values():
        _parse(svg)
        assert not re.search(r"<b[ >]", svg)
