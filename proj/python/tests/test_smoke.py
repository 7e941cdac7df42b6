import math

import numpy as np
import pytest

mc = pytest.importorskip("maskctrl")


def test_uniform_predict_rows():
    m = mc.UniformModel(3, 4)
    p = m.predict([4, 1, 4])
    assert p.shape == (3, 4)
    assert np.allclose(p[0], 0.25)
    assert p[1].tolist() == [0.0, 1.0, 0.0, 0.0]


def test_phi_zero_counts_are_exact():
    count, total = mc.phi_zero_count(10)
    assert (count, total) == (107467136, 10**10)
    assert f"{100 * count / total:.2f}" == "1.07"


def test_equality_reward_truncates():
    r = mc.equality_reward()
    x = [0] * 10
    assert mc.phi(x) == 0
    assert r(x) == 1.0
    assert r.log([9] + [0] * 9) == pytest.approx(-45.0)
    assert r.log([0, 9, 9] + [0] * 7) == pytest.approx(-50.0)


def test_sample_is_seeded_and_respects_prompt():
    model = mc.ProductModel.random(6, 4, seed=3)
    reward = mc.custom_reward(lambda x: 1.0 + x[0])
    a = mc.sample(model, reward, steps=4, samples=20, seed=7, chains=3,
                  prompt_positions=[1, 2], prompt_values=[3, 0])
    b = mc.sample(model, reward, steps=4, samples=20, seed=7, chains=3,
                  prompt_positions=[1, 2], prompt_values=[3, 0])
    assert [c["sequence"].tolist() for c in a] == [c["sequence"].tolist() for c in b]
    for chain in a:
        assert chain["sequence"][1:3].tolist() == [3, 0]
        assert all(0 <= t < 4 for t in chain["sequence"])
        assert chain["model_queries"] <= 4


def test_callable_model_drops_extra_columns():
    def fn(tokens):
        rows = np.full((2, 3), 0.25)
        rows[:, 2] = 0.5  # mask column
        return rows

    m = mc.CallableModel(fn, 2, 2)
    out = mc.sample(m, mc.constant_reward(), steps=2, samples=5, seed=1)
    assert len(out) == 1 and len(out[0]["sequence"]) == 2


def test_exact_posterior_and_tv():
    table = mc.JointTable.uniform(4, 3)
    reward = mc.custom_reward(lambda x: float(sum(t + 1 for t in x) == 8))
    q, log_z = mc.exact_posterior(table, reward)
    assert np.count_nonzero(q) == 19
    assert log_z == pytest.approx(math.log(19 / 81))
    assert mc.total_variation(q.tolist(), q.tolist()) == 0.0


def test_protein_metrics():
    assert mc.gravy("AAA") == pytest.approx(1.8)
    assert mc.gravy("AR") == pytest.approx(-1.35)
    assert mc.instability_index("GG") == pytest.approx(66.7)
    helix, turn, sheet = mc.secondary_structure_fractions("LLLL")
    assert helix == 1.0
    assert len(mc.amino_acids()) == 20


def test_errors_map_to_python_exceptions():
    with pytest.raises(ValueError):
        mc.reward_from_json("{\"constraints\": [{\"metric\": \"gravy\", \"weight\": -1}]}")
    with pytest.raises(mc.Error):
        mc.sample(mc.UniformModel(2, 2), mc.constant_reward(), steps=0)
    with pytest.raises(mc.ValidationError):
        mc.JointTable(1, 2, [0.5, 0.6])


def test_sampler_releases_gil_with_python_rewards():
    # A Python reward runs under the GIL from the worker side.
    seen = []

    def r(x):
        seen.append(len(x))
        return 1.0

    mc.sample(mc.UniformModel(3, 2), mc.custom_reward(r), steps=3, samples=4, seed=0)
    assert seen and set(seen) == {3}
