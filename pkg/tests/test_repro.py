from treegen.repro import (
    StudyRow,
    apply_mcar,
    format_study,
    load_iris,
    split_dataset,
)


def test_split_is_seeded_and_disjoint():
    data = load_iris()
    a_train, a_test = split_dataset(data, seed=4)
    b_train, b_test = split_dataset(data, seed=4)
    assert a_train.equals(b_train) and a_test.equals(b_test)
    assert a_train.n_rows == 120 and a_test.n_rows == 30
    c_train, _ = split_dataset(data, seed=5)
    assert not a_train.equals(c_train)


def test_apply_mcar_spares_outcome():
    data = load_iris()
    masked = apply_mcar(data, 0.3, seed=1)
    mask = masked.missing_mask()
    assert mask[:, :4].mean() > 0.2
    assert not mask[:, 4].any()
    # originals untouched
    assert data.is_complete()


def test_format_study_reports_bands_and_orderings():
    rows = [
        StudyRow("flow", "baseline", 0.50, 0.93, 0.94, (0.57, 0.92, 0.95)),
        StudyRow("vp", "baseline", 0.55, 0.90, 0.93, (0.57, 0.93, 0.96)),
        StudyRow("flow", "n_noise=1", 0.70, 0.80, 0.85, (0.72, 0.86, 0.81)),
        StudyRow("vp", "n_noise=1", 0.80, 0.70, 0.70, (0.81, 0.71, 0.69)),
        StudyRow("vp", "n_t=10", 0.75, 0.55, 0.80, (0.75, 0.56, 0.84)),
        StudyRow("flow", "mcar20", 0.60, 0.85, 0.90, None),
    ]
    text = format_study(rows)
    assert "W:pass" in text
    assert "incomplete-data W ratio" in text
    assert "ordering vp: W(n_t=10)=0.750 > W(n_t=50)=0.550 pass" in text
    out_of_band = [StudyRow("flow", "baseline", 0.30, 0.92, 0.95, (0.57, 0.92, 0.95))]
    assert "W:FAIL" in format_study(out_of_band)
