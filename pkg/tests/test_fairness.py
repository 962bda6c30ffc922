import numpy as np
import pytest
from hypothesis import given, strategies as st

from netfair import autodiff as ad
from netfair import fairness, nscm
from netfair.autodiff import Tensor
from netfair.fairness import (Classifier, ClassifierConfig, ConstantClassifier, FairnessError, FairnessReport,
                              cf_regularizer, gcf_from_features, gcf_regularizer, iid_cf, propensity_weights,
                              rd_regularizer, risk_difference, train_fair_classifier)
from netfair.mpva import MpvaConfig, MpvaModel
from netfair.nscm import NodeTable


class ColumnRule:
    """Logit equal to ``scale * (x[:, 0] - cut)``: a fixed classifier for hand checks."""

    def __init__(self, cut=0.0, scale=1.0):
        self.cut, self.scale = cut, scale

    def logits(self, x):
        x = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
        return Tensor(self.scale * (x[:, :1] - self.cut))

    def scores(self, x):
        return ad.sigmoid(self.logits(x)).data.ravel()

    def predict(self, x):
        return (self.logits(x).data.ravel() > 0).astype(np.int64)


def table(s, x, z=None, y=None):
    n = len(s)
    z = np.zeros((n, 0)) if z is None else np.asarray(z, float).reshape(n, -1)
    return NodeTable(s=s, z=z, x=np.asarray(x, float).reshape(n, -1), y=np.zeros(n) if y is None else y)


@pytest.fixture(scope="module")
def d1():
    g, t, _ = nscm.generate_preset("d1", seed=0, n=500)
    model = MpvaModel(t.x.shape[1], t.z.shape[1], MpvaConfig(seed=0, epochs_phase1=150, epochs_phase2=300)).fit(g, t)
    return g, t, fairness.interventional_features(model, g, t)


def test_risk_difference_hand_toy():
    # group 1 predictions: 1, 0 ; group 0 predictions: 0, 0  -> |1/2 - 0|
    t = table([1, 1, 0, 0], [2.0, -1.0, -3.0, -0.5])
    assert risk_difference(ColumnRule(), t) == 0.5
    assert risk_difference(ColumnRule(), t, nodes=np.array([0, 2])) == 1.0


def test_risk_difference_extremes():
    t = table([1, 0, 1, 0, 1], [1.0, -1.0, 1.0, -1.0, 1.0])
    assert risk_difference(ColumnRule(), t) == 1.0
    assert risk_difference(ConstantClassifier(1), t) == 0.0
    with pytest.raises(FairnessError, match="non-empty"):
        risk_difference(ColumnRule(), table([1, 1], [0.0, 1.0]))


def test_iid_cf_without_confounding_is_group_mean_gap():
    rng = np.random.default_rng(0)
    n = 4000
    s = rng.integers(0, 2, n)
    z = rng.normal(size=n)  # independent of s
    x = rng.normal(size=n) + s
    t = table(s, x, z)
    w = propensity_weights(s, t.z)
    assert np.abs(w - 1).max() < 0.1
    scores = ColumnRule().scores(t.x)
    assert iid_cf(ColumnRule(), t) == pytest.approx(abs(scores[s == 1].mean() - scores[s == 0].mean()), abs=0.01)
    for label in (0, 1):
        assert iid_cf(ConstantClassifier(label), t) == pytest.approx(0.0, abs=1e-12)


def test_propensity_without_covariates_is_unit():
    np.testing.assert_array_equal(propensity_weights([0, 1, 1], np.zeros((3, 0))), np.ones(3))
    with pytest.raises(FairnessError):
        propensity_weights([1, 1, 1], np.zeros((3, 1)))


def test_propensity_clipped():
    s = np.array([0] * 50 + [1] * 50)
    z = s * 100.0  # separable: raw propensities hit 0 and 1
    w = propensity_weights(s, z[:, None])
    assert np.all(np.isfinite(w))
    p_s1 = 0.5
    assert w.max() <= p_s1 / fairness.PROPENSITY_CLIP[0] + 1e-9


def test_gcf_regularizer_identical_variants_zero_value_and_grad():
    x = np.random.default_rng(0).normal(size=(30, 3))
    h = Classifier(3, rng=np.random.default_rng(1))
    reg = gcf_regularizer(h, x, x.copy())
    assert reg.item() == 0.0
    ad.backward(reg)
    for p in h.parameters():
        assert p.grad is None or np.all(p.grad == 0)


def test_zero_weight_classifier_gives_zero_penalties():
    rng = np.random.default_rng(0)
    t = table(rng.integers(0, 2, 40), rng.normal(size=(40, 2)), rng.normal(size=40))
    h = Classifier(2, rng=rng)
    for p in h.parameters():
        p.data[...] = 0.0
    assert gcf_regularizer(h, t.x, t.x + 1).item() == 0.0
    assert rd_regularizer(h, t).item() == 0.0
    # weights differ per node, but equal scores of 1/2 cancel only if the weighted means agree
    unit = np.ones(len(t))
    assert cf_regularizer(h, t, weights=unit).item() == 0.0


def test_surrogate_converges_to_hard_gap_as_temperature_shrinks():
    rng = np.random.default_rng(3)
    x_pos = rng.normal(0.4, 1.0, size=(200, 1))
    x_neg = rng.normal(-0.2, 1.0, size=(200, 1))
    h = ColumnRule()
    hard = gcf_from_features(h, x_pos, x_neg)
    gaps = [abs(gcf_regularizer(h, x_pos, x_neg, temperature=tau).item() - hard) for tau in (1.0, 0.1, 1e-3, 1e-5)]
    assert gaps[-1] < 1e-3
    assert gaps[-1] <= gaps[0]


def test_surrogate_close_to_hard_with_margin():
    rng = np.random.default_rng(4)
    x_pos = rng.choice([-4.0, 4.0], size=(300, 1), p=[0.3, 0.7])
    x_neg = rng.choice([-4.0, 4.0], size=(300, 1), p=[0.6, 0.4])
    h = ColumnRule(scale=1.0)  # |logit| = 4 >= 2
    soft = gcf_regularizer(h, x_pos, x_neg).item()
    assert abs(soft - gcf_from_features(h, x_pos, x_neg)) <= 0.02


@given(st.integers(0, 2**16))
def test_gcf_constant_is_zero_and_relabel_invariant(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 40))
    x_pos, x_neg = rng.normal(size=(n, 2)), rng.normal(size=(n, 2))
    for label in (0, 1):
        assert gcf_from_features(ConstantClassifier(label), x_pos, x_neg) == 0.0
    h = ColumnRule(cut=0.1)
    perm = rng.permutation(n)
    assert gcf_from_features(h, x_pos[perm], x_neg[perm]) == pytest.approx(gcf_from_features(h, x_pos, x_neg))


def test_report_record_round_trip():
    r = FairnessReport("d1", "gcf", 3, 0.5, 0.9, 0.1, 0.2, 0.03, None, 0.01, 0.02, "abc", "a note, with comma")
    back = FairnessReport.from_record(r.to_record())
    assert back.true_gcf is None and back.seed == 3 and back.notes == "a note; with comma"
    assert back.gcf == pytest.approx(0.03)
    with pytest.raises(FairnessError, match="fields"):
        FairnessReport.from_record("a,b")
    with pytest.raises(FairnessError, match="finite"):
        FairnessReport(accuracy=float("nan"), rd=0, cf=0).check_finite()


def test_training_argument_errors(d1):
    g, t, _ = d1
    with pytest.raises(FairnessError, match="requires a trained MPVA"):
        train_fair_classifier(g, t, objective="gcf", lam=1.0)
    with pytest.raises(FairnessError, match="unknown objective"):
        train_fair_classifier(g, t, objective="eo")
    with pytest.raises(FairnessError, match="non-negative"):
        train_fair_classifier(g, t, objective="rd", lam=-1)


def test_unconstrained_classifier_and_report_fields(d1):
    g, t, xt = d1
    h, report = train_fair_classifier(g, t, objective="none", x_tilde=xt, cfg=ClassifierConfig(epochs=300))
    assert report.accuracy > 0.9
    assert report.true_gcf is not None and report.true_gcf > 0.1
    assert report.own_train is None and report.digest == t.meta["digest"]


def test_plain_metrics_diverge_from_true_gcf(d1):
    g, t, xt = d1
    _, report = train_fair_classifier(g, t, objective="none", x_tilde=xt, cfg=ClassifierConfig(epochs=300))
    assert abs(report.cf - report.true_gcf) > 0.05 or abs(report.rd - report.true_gcf) > 0.05


def test_large_lambda_collapses_gap(d1):
    g, t, xt = d1
    cfg = ClassifierConfig(epochs=300)
    gaps = [train_fair_classifier(g, t, objective="gcf", lam=lam, x_tilde=xt, cfg=cfg)[1].gcf for lam in (0.0, 1.0, 50.0)]
    assert gaps[-1] <= 0.02
    assert gaps[-1] <= gaps[0]


def test_gcn_variant_needs_binding_and_trains(d1):
    g, t, xt = d1
    h = Classifier(t.x.shape[1], gcn=True)
    with pytest.raises(FairnessError, match="bind"):
        h.logits(t.x)
    _, report = train_fair_classifier(g, t, objective="gcf", lam=1.0, x_tilde=xt,
                                      cfg=ClassifierConfig(epochs=100, gcn=True))
    assert 0.0 <= report.gcf <= 1.0


def test_classifier_save_load(tmp_path, d1):
    g, t, _ = d1
    h = Classifier(t.x.shape[1], hidden=5, rng=np.random.default_rng(2))
    fairness.save_classifier(tmp_path / "h.nfck", h)
    back = fairness.load_classifier(tmp_path / "h.nfck", g)
    np.testing.assert_array_equal(back.logits(t.x).data, h.logits(t.x).data)


def test_no_z_note():
    rng = np.random.default_rng(0)
    g, t, _ = nscm.generate_preset("d1", seed=0, n=200)
    bare = NodeTable(s=t.s, z=np.zeros((len(t), 0)), x=t.x, y=t.y)
    _, report = train_fair_classifier(g, bare, objective="cf", lam=1.0, cfg=ClassifierConfig(epochs=20))
    assert "no z" in report.notes and report.gcf is None


def test_constant_classifier_cf_zero_under_confounding(d1):
    _, t, _ = d1
    for label in (0, 1):
        assert iid_cf(ConstantClassifier(label), t) == pytest.approx(0.0, abs=1e-12)
        h = ConstantClassifier(label)
        assert cf_regularizer(h, t).item() == pytest.approx(0.0, abs=1e-12)
