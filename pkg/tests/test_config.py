"""Config schema validation, canonicalization, and content hashing."""

import json
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from multibc.config import (
    KIND_SUMMARIES,
    KINDS,
    SCHEMA_VERSION,
    ConfigError,
    ExperimentConfig,
    config_hash,
    load_config,
    parse_fraction,
    validate_config,
)


def test_every_kind_has_a_summary_line():
    assert set(KIND_SUMMARIES) == set(KINDS)


def test_parse_fraction_accepts_int_and_string():
    assert parse_fraction(3) == Fraction(3)
    assert parse_fraction("2/6") == Fraction(1, 3)
    assert parse_fraction(" 1/3 ") == Fraction(1, 3)


@pytest.mark.parametrize("bad", [True, 0.5, [1, 3], None])
def test_parse_fraction_rejects_non_exact(bad):
    with pytest.raises((ValueError, TypeError)):
        parse_fraction(bad)


class TestValidation:
    def test_minimal_docs_validate_for_every_kind(self, minimal_doc):
        for kind in KINDS:
            eff = validate_config(minimal_doc(kind))
            assert eff["kind"] == kind
            assert eff["precision"]["guard_bits"] == 64
            assert eff["outputs"]["summary"] == "summary.csv"
            assert eff["outputs"]["records"] == "records.jsonl"
            assert eff["outputs"]["curves"] == "curves.json"

    def test_defaults_filled(self, minimal_doc):
        eff = validate_config(minimal_doc("poisson-hit"))
        assert eff["run"]["r_max"] == 3
        assert eff["system"]["kind"] == "doubling"

    def test_missing_schema_version(self, minimal_doc):
        doc = minimal_doc("poisson-hit")
        del doc["schema_version"]
        with pytest.raises(ConfigError) as exc:
            validate_config(doc)
        assert exc.value.path == "schema_version"

    def test_wrong_schema_version(self, minimal_doc):
        doc = minimal_doc("poisson-hit")
        doc["schema_version"] = SCHEMA_VERSION + 1
        with pytest.raises(ConfigError) as exc:
            validate_config(doc)
        assert exc.value.path == "schema_version"

    def test_unknown_kind(self, minimal_doc):
        doc = minimal_doc("poisson-hit")
        doc["kind"] = "frobnicate"
        with pytest.raises(ConfigError) as exc:
            validate_config(doc)
        assert exc.value.path == "kind"

    def test_unknown_key_reports_dotted_path(self, minimal_doc):
        doc = minimal_doc("poisson-hit")
        doc["run"]["typo_key"] = 1
        with pytest.raises(ConfigError) as exc:
            validate_config(doc)
        assert exc.value.path == "run.typo_key"

    def test_missing_required_key_reports_dotted_path(self, minimal_doc):
        doc = minimal_doc("poisson-hit")
        del doc["target"]["center"]
        with pytest.raises(ConfigError) as exc:
            validate_config(doc)
        assert exc.value.path == "target.center"

    def test_missing_seed(self, minimal_doc):
        doc = minimal_doc("kg-scan")
        del doc["seed"]
        with pytest.raises(ConfigError) as exc:
            validate_config(doc)
        assert exc.value.path == "seed"

    def test_int_bounds(self, minimal_doc):
        doc = minimal_doc("poisson-hit")
        doc["run"]["samples"] = 10
        with pytest.raises(ConfigError) as exc:
            validate_config(doc)
        assert exc.value.path == "run.samples"

    def test_bool_is_not_an_int(self, minimal_doc):
        doc = minimal_doc("poisson-hit")
        doc["run"]["samples"] = True
        with pytest.raises(ConfigError) as exc:
            validate_config(doc)
        assert exc.value.path == "run.samples"

    def test_non_finite_number_rejected(self, minimal_doc):
        doc = minimal_doc("poisson-hit")
        doc["target"]["lambda"] = float("inf")
        with pytest.raises(ConfigError) as exc:
            validate_config(doc)
        assert exc.value.path == "target.lambda"

    def test_float_center_rejected(self, minimal_doc):
        doc = minimal_doc("poisson-hit")
        doc["target"]["center"] = 0.3333
        with pytest.raises(ConfigError) as exc:
            validate_config(doc)
        assert exc.value.path == "target.center"

    def test_center_out_of_range(self, minimal_doc):
        doc = minimal_doc("poisson-hit")
        doc["target"]["center"] = "7/3"
        with pytest.raises(ConfigError):
            validate_config(doc)

    def test_center_canonicalized(self, minimal_doc):
        doc = minimal_doc("poisson-hit")
        doc["target"]["center"] = "2/6"
        eff = validate_config(doc)
        assert eff["target"]["center"] == "1/3"

    def test_filename_must_be_bare(self, minimal_doc):
        doc = minimal_doc("poisson-hit")
        doc["outputs"] = {"summary": "sub/dir.csv"}
        with pytest.raises(ConfigError) as exc:
            validate_config(doc)
        assert exc.value.path == "outputs.summary"

    def test_null_rejected_where_not_allowed(self, minimal_doc):
        doc = minimal_doc("poisson-hit")
        doc["target"]["lambda"] = None
        with pytest.raises(ConfigError) as exc:
            validate_config(doc)
        assert exc.value.path == "target.lambda"

    def test_list_item_path_in_error(self, minimal_doc):
        doc = minimal_doc("mixed-poisson-return")
        doc["target"]["taus"] = [0.5, "x"]
        with pytest.raises(ConfigError) as exc:
            validate_config(doc)
        assert exc.value.path == "target.taus[1]"

    def test_top_level_must_be_object(self):
        with pytest.raises(ConfigError):
            validate_config([1, 2, 3])


class TestSeedOverride:
    def test_override_replaces_seed(self, minimal_doc):
        eff = validate_config(minimal_doc("kg-scan"), seed_override=777)
        assert eff["seed"] == 777

    @pytest.mark.parametrize("bad", [-1, 2**64])
    def test_override_range(self, minimal_doc, bad):
        with pytest.raises(ConfigError) as exc:
            validate_config(minimal_doc("kg-scan"), seed_override=bad)
        assert exc.value.path == "seed"

    def test_override_matches_explicit_seed_hash(self, minimal_doc):
        doc = minimal_doc("kg-scan")
        via_override = ExperimentConfig.from_doc(doc, seed_override=777)
        doc["seed"] = 777
        explicit = ExperimentConfig.from_doc(doc)
        assert via_override.hash == explicit.hash


class TestCrossChecks:
    def test_gibbs_weights_length(self, minimal_doc):
        doc = minimal_doc("gibbs-lil")
        doc["potential"]["weights"] = [0.2, 0.3, 0.5]
        with pytest.raises(ConfigError) as exc:
            validate_config(doc)
        assert exc.value.path == "potential.weights"

    def test_gibbs_weights_required_for_weights_kind(self, minimal_doc):
        doc = minimal_doc("gibbs-lil")
        doc["potential"]["weights"] = None
        with pytest.raises(ConfigError) as exc:
            validate_config(doc)
        assert exc.value.path == "potential.weights"

    def test_kg_scan_requires_alphas(self, minimal_doc):
        doc = minimal_doc("kg-scan")
        doc["run"]["alphas"] = None
        with pytest.raises(ConfigError) as exc:
            validate_config(doc)
        assert exc.value.path == "run.alphas"

    def test_kg_alpha_labels(self, minimal_doc):
        doc = minimal_doc("kg-scan")
        doc["run"]["alphas"] = ["golden", "sqrt2", "355/113"]
        validate_config(doc)
        doc["run"]["alphas"] = ["pi"]
        with pytest.raises(ConfigError) as exc:
            validate_config(doc)
        assert exc.value.path == "run.alphas[0]"

    def test_kg_mc_requires_samples_and_n(self, minimal_doc):
        doc = minimal_doc("kg-scan")
        doc["run"] = {"mode": "mc-average", "samples": 100}
        with pytest.raises(ConfigError) as exc:
            validate_config(doc)
        assert exc.value.path == "run.n"

    def test_kg_shift_needs_inhomogeneous(self, minimal_doc):
        doc = minimal_doc("kg-scan")
        doc["query"]["shift"] = 0.25
        with pytest.raises(ConfigError) as exc:
            validate_config(doc)
        assert exc.value.path == "query.shift"
        doc["query"]["flavor"] = "inhomogeneous"
        validate_config(doc)

    def test_multilog_checkpoint_order(self, minimal_doc):
        doc = minimal_doc("multilog-hit")
        doc["run"]["log2_n_min"] = 8
        with pytest.raises(ConfigError) as exc:
            validate_config(doc)
        assert exc.value.path == "run.log2_n_min"

    def test_scaled_band_order(self, minimal_doc):
        doc = minimal_doc("scaled-process")
        doc["run"]["bands"] = [[0.5, 0.5]]
        with pytest.raises(ConfigError) as exc:
            validate_config(doc)
        assert exc.value.path == "run.bands[0]"

    def test_scaled_bands_inside_cap(self, minimal_doc):
        doc = minimal_doc("scaled-process")
        doc["target"]["radius_cap"] = 0.75
        with pytest.raises(ConfigError) as exc:
            validate_config(doc)
        assert exc.value.path == "run.bands"

    def test_indep_ks_strictly_increasing(self, minimal_doc):
        doc = minimal_doc("indep-audit")
        doc["params"]["tuples"] = [{"n": 1024, "ks": [3, 3]}]
        with pytest.raises(ConfigError) as exc:
            validate_config(doc)
        assert "ks" in exc.value.path

    def test_indep_ks_within_n(self, minimal_doc):
        doc = minimal_doc("indep-audit")
        doc["params"]["tuples"] = [{"n": 16, "ks": [1, 32]}]
        with pytest.raises(ConfigError):
            validate_config(doc)

    def test_indep_fourier_shape(self, minimal_doc):
        doc = minimal_doc("indep-audit")
        doc["params"]["em_fourier"] = [{"modes": [1, -2], "times": [0, 1, 3]}]
        with pytest.raises(ConfigError):
            validate_config(doc)

    def test_indep_ramp_pairing(self, minimal_doc):
        doc = minimal_doc("indep-audit")
        doc["params"]["em_ramp_centers"] = [0.3]
        with pytest.raises(ConfigError) as exc:
            validate_config(doc)
        assert exc.value.path == "params.em_ramp_times"

    def test_rogers_moment_sample_floor(self, minimal_doc):
        doc = minimal_doc("rogers-audit")
        doc["run"]["mode"] = "moments"
        with pytest.raises(ConfigError) as exc:
            validate_config(doc)
        assert exc.value.path == "run.samples"
        doc["run"]["samples"] = 100_000
        validate_config(doc)


class TestHashing:
    def test_hash_ignores_key_order(self, minimal_doc):
        doc = minimal_doc("poisson-hit")
        shuffled = {k: doc[k] for k in reversed(list(doc))}
        shuffled["target"] = {
            k: doc["target"][k] for k in reversed(list(doc["target"]))
        }
        a = ExperimentConfig.from_doc(doc)
        b = ExperimentConfig.from_doc(shuffled)
        assert a.hash == b.hash

    def test_hash_ignores_spelled_out_defaults(self, minimal_doc):
        doc = minimal_doc("poisson-hit")
        explicit = minimal_doc("poisson-hit")
        explicit["run"]["r_max"] = 3
        explicit["precision"] = {"guard_bits": 64}
        assert (
            ExperimentConfig.from_doc(doc).hash
            == ExperimentConfig.from_doc(explicit).hash
        )

    def test_hash_sees_seed(self, minimal_doc):
        doc = minimal_doc("poisson-hit")
        a = ExperimentConfig.from_doc(doc)
        doc["seed"] += 1
        b = ExperimentConfig.from_doc(doc)
        assert a.hash != b.hash

    def test_hash_sees_fraction_value_not_spelling(self, minimal_doc):
        doc = minimal_doc("poisson-hit")
        a = ExperimentConfig.from_doc(doc)
        doc["target"]["center"] = "2/6"
        assert ExperimentConfig.from_doc(doc).hash == a.hash
        doc["target"]["center"] = "1/5"
        assert ExperimentConfig.from_doc(doc).hash != a.hash

    def test_hash_is_sha256_of_canonical_json(self, minimal_doc):
        eff = validate_config(minimal_doc("kg-scan"))
        assert config_hash(eff) == config_hash(json.loads(json.dumps(eff)))
        assert len(config_hash(eff)) == 64

    @given(seed=st.integers(min_value=0, max_value=2**64 - 1))
    def test_any_u64_seed_validates(self, seed):
        doc = {
            "schema_version": 1,
            "kind": "rogers-audit",
            "name": "s",
            "seed": seed,
            "run": {"mode": "multi-solution", "samples": 400},
        }
        assert validate_config(doc)["seed"] == seed


class TestExperimentConfig:
    def test_properties(self, minimal_doc):
        cfg = ExperimentConfig.from_doc(minimal_doc("poisson-hit"))
        assert cfg.kind == "poisson-hit"
        assert cfg.name == "tiny-poisson"
        assert cfg.seed == 11
        assert cfg.guard_bits == 64
        assert cfg.output_name("summary") == "summary.csv"
        assert cfg["target"]["center"] == "1/3"

    def test_load_config_round_trip(self, minimal_doc, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(minimal_doc("kg-scan")))
        cfg = load_config(p)
        assert cfg.kind == "kg-scan"
        assert cfg.hash == ExperimentConfig.from_doc(minimal_doc("kg-scan")).hash

    def test_load_config_bad_json(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError) as exc:
            load_config(p)
        assert exc.value.path == "<document>"

    def test_load_config_missing_file(self, tmp_path):
        with pytest.raises(ConfigError) as exc:
            load_config(tmp_path / "absent.json")
        assert exc.value.path == "<document>"
