"""End-to-end sanity checks for the python module.

Runs standalone (python test_smoke.py) and under pytest.
"""

import math

import sumflow


def test_mixture_eval():
    m = sumflow.Model.mixture([0.3, 0.4], [[0.2, 0.6], [0.9, 0.4]])
    # 0.3 * 0.2 * 0.6 + 0.4 * 0.9 * 0.4
    assert math.isclose(math.exp(m.log_value([1, 1])), 0.18, rel_tol=1e-12)
    assert math.isclose(math.exp(m.log_partition()), 0.7, rel_tol=1e-12)
    # marginalising the second variable: f(1, *) = f(1, 0) + f(1, 1)
    assert math.isclose(
        math.exp(m.log_value([1, None])),
        math.exp(m.log_value([1, 0])) + math.exp(m.log_value([1, 1])),
        rel_tol=1e-12,
    )
    assert m.validate() == []


def test_json_round_trip():
    m = sumflow.Model.mixture([0.5, 0.25], [[0.2, 0.6], [0.9, 0.4]])
    deep = m.deepen(3)
    text = deep.to_json()
    back = sumflow.Model.from_json(text)
    assert back.to_json() == text
    assert back.effective_weights() == deep.effective_weights()


def test_deepen_preserves_distribution():
    m = sumflow.Model.mixture([0.3, 0.4, 0.2, 0.1], [[0.2] * 3, [0.6] * 3,
                                                     [0.8] * 3, [0.4] * 3])
    deep = m.deepen(2, branching=2)
    assert deep.effective_weights() == [0.3, 0.4, 0.2, 0.1]
    for row in ([0, 0, 0], [1, 0, 1], [1, 1, 1]):
        assert math.isclose(deep.log_value(list(row)), m.log_value(list(row)),
                            rel_tol=1e-12)
    assert deep.count_trees() == m.count_trees() == 4


def test_gradient_matches_hand_value():
    m = sumflow.Model.mixture([0.3, 0.4], [[0.2, 0.6], [0.9, 0.4]])
    data = [[1, 1], [0, 0]]
    g = m.gradients(data)
    assert len(g) == len(m.sum_edges()) == 2
    assert math.isclose(g[0], 10.0 / 21.0, rel_tol=1e-12)
    assert math.isclose(g[1], -5.0 / 14.0, rel_tol=1e-12)


def test_training_improves_likelihood():
    data = sumflow.synthesize(components=3, dims=5, samples=300, seed=5)
    assert len(data) == 300 and len(data[0]) == 5
    m = sumflow.Model.random_mixture(components=3, dims=5, seed=9)
    # Usable as built: weights are a proper distribution, not zeros.
    assert math.isclose(math.exp(m.log_partition()), 1.0, rel_tol=1e-12)
    m = m.deepen(2)
    m.init_near_zero(scale=0.01, seed=9)
    trace = sumflow.train(m, data, eta=0.01, iterations=60)
    assert len(trace["llh"]) == 61
    assert trace["llh"][-1] > trace["llh"][0]
    n = len(data)
    assert trace["llh"][-1] / n > -5.0 * 5  # sane per-sample range


def test_experiment_shapes():
    data = sumflow.synthesize(components=3, dims=4, samples=200, seed=3)
    result = sumflow.run_experiment(
        data, components=3, depths=[1, 2], runs=1, iterations=40, seed=3
    )
    assert result["depths"] == [1, 2]
    assert len(result["cells"]) == 2
    for cell in result["cells"]:
        assert len(cell["llh"]) == 41
        assert 0 <= cell["iterations_to_threshold"] <= 40


def test_errors_surface():
    try:
        sumflow.Model.mixture([0.5], [[0.2], [0.6]])
    except sumflow.SumflowError:
        pass
    else:
        raise AssertionError("mismatched component count should raise")


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            print(f"ok {name}")
    print(f"sumflow {sumflow.__version__}: python smoke tests passed")
