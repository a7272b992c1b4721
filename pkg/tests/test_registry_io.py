"""Registry, trace-file, and plan-file round-trip tests."""

import json

import numpy as np
import pytest

from resotrim.errors import ParseError, ValidationError
from resotrim.fitting import TransmissionTrace
from resotrim.planner import (
    ResonatorRecord,
    ShoelaceArray,
    TrimAction,
    TrimPlan,
)
from resotrim.registry import (
    DeviceRegistry,
    PairLink,
    TransmonEntry,
    dumps_registry,
    load_plan,
    load_registry,
    load_trace,
    save_plan,
    save_registry,
    save_trace,
)


def record(rid, role, f, remaining=10):
    return ResonatorRecord(
        id=rid, role=role, f_meas=f,
        shoelaces=ShoelaceArray(total=10, remaining=remaining),
    )


def device_fixture(n_pairs=17):
    """Registry shaped like the 17-transmon, 34-resonator device."""
    reg = DeviceRegistry(device_id="dev17")
    for k in range(n_pairs):
        fr = 7.2e9 + 40e6 * k
        reg.resonators[f"r{k:02d}"] = record(f"r{k:02d}", "readout", fr)
        reg.resonators[f"p{k:02d}"] = record(f"p{k:02d}", "purcell", fr + 15e6)
        reg.transmons[f"q{k:02d}"] = TransmonEntry(
            id=f"q{k:02d}", f_q=5.5e9 + 20e6 * k, alpha=-280e6,
            e_j=14e9, e_c=280e6, r_j=6000.0,
        )
        reg.pairs[f"pair{k:02d}"] = PairLink(
            id=f"pair{k:02d}", transmon=f"q{k:02d}",
            readout=f"r{k:02d}", purcell=f"p{k:02d}",
            feedline="fl0" if k < 9 else "fl1",
            j=10e6, kappa=20e6, chi=-10e6,
        )
    return reg


class TestRegistryRoundTrip:
    def test_empty_registry(self, tmp_path):
        reg = DeviceRegistry(device_id="empty")
        path = tmp_path / "reg.json"
        save_registry(reg, path)
        text = path.read_text()
        save_registry(load_registry(path), path)
        assert path.read_text() == text

    def test_device_fixture_round_trips(self, tmp_path):
        reg = device_fixture()
        path = tmp_path / "reg.json"
        save_registry(reg, path)
        loaded = load_registry(path)
        assert dumps_registry(loaded) == dumps_registry(reg)
        assert len(loaded.resonators) == 34
        assert len(loaded.transmons) == 17
        assert loaded.feedline_pairs("fl0")[0].id == "pair00"

    def test_unknown_fields_preserved(self, tmp_path):
        reg = device_fixture(2)
        path = tmp_path / "reg.json"
        save_registry(reg, path)
        doc = json.loads(path.read_text())
        doc["lab_station"] = "fridge3"
        doc["resonators"][0]["notes"] = "slightly lossy"
        doc["pairs"][0]["fit_id"] = "fit-0042"
        path.write_text(json.dumps(doc))
        loaded = load_registry(path)
        save_registry(loaded, path)
        out = json.loads(path.read_text())
        assert out["lab_station"] == "fridge3"
        assert out["resonators"][0]["notes"] == "slightly lossy"
        assert out["pairs"][0]["fit_id"] == "fit-0042"

    def test_missing_resonator_reference(self, tmp_path):
        reg = device_fixture(1)
        del reg.resonators["p00"]
        path = tmp_path / "reg.json"
        # save does not validate; the error surfaces on load
        path.write_text(dumps_registry(reg))
        with pytest.raises(ValidationError) as exc:
            load_registry(path)
        assert any("pairs.pair00.purcell" in p for p in exc.value.paths)

    def test_wrong_role_reference(self, tmp_path):
        reg = device_fixture(1)
        reg.pairs["pair00"].purcell = "r00"  # readout in a purcell slot
        path = tmp_path / "reg.json"
        path.write_text(dumps_registry(reg))
        with pytest.raises(ValidationError):
            load_registry(path)

    def test_version_check(self, tmp_path):
        path = tmp_path / "reg.json"
        path.write_text(json.dumps({"version": 99, "device_id": "x"}))
        with pytest.raises(ValidationError):
            load_registry(path)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "reg.json"
        path.write_text("{nope")
        with pytest.raises(ParseError):
            load_registry(path)

    def test_next_cycle_index(self):
        reg = device_fixture(1)
        assert reg.next_cycle_index() == 1
        reg.history.append({"event": "apply", "cycle_index": 1})
        assert reg.next_cycle_index() == 2


class TestTraceFiles:
    def test_three_row_file(self, tmp_path):
        path = tmp_path / "trace.csv"
        path.write_text(
            "frequency_hz,re_s21,im_s21\n"
            "7.0e9,1.0,0.0\n7.1e9,0.5,-0.1\n7.2e9,1.0,0.0\n"
        )
        tr = load_trace(path)
        assert len(tr) == 3
        assert tr.values[1] == pytest.approx(0.5 - 0.1j)

    def test_round_trip(self, tmp_path):
        f = np.linspace(7.0e9, 7.2e9, 64)
        tr = TransmissionTrace(freqs=f, values=np.exp(1j * f / 1e9))
        path = tmp_path / "trace.csv"
        save_trace(tr, path)
        back = load_trace(path)
        assert np.array_equal(back.freqs, tr.freqs)
        assert np.array_equal(back.values, tr.values)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "trace.csv"
        path.write_text("freq,re,im\n7.0e9,1.0,0.0\n")
        with pytest.raises(ParseError) as exc:
            load_trace(path)
        assert exc.value.line == 1

    def test_non_numeric_row_names_line(self, tmp_path):
        path = tmp_path / "trace.csv"
        path.write_text("frequency_hz,re_s21,im_s21\n7.0e9,1.0,0.0\n7.1e9,x,0.0\n")
        with pytest.raises(ParseError) as exc:
            load_trace(path)
        assert exc.value.line == 3

    def test_descending_rows_sorted_with_warning(self, tmp_path):
        path = tmp_path / "trace.csv"
        path.write_text(
            "frequency_hz,re_s21,im_s21\n"
            "7.2e9,1.0,0.0\n7.1e9,0.5,0.0\n7.0e9,1.0,0.0\n"
        )
        tr = load_trace(path)
        assert np.all(np.diff(tr.freqs) > 0)
        assert tr.warnings

    def test_duplicate_frequency_rejected(self, tmp_path):
        path = tmp_path / "trace.csv"
        path.write_text(
            "frequency_hz,re_s21,im_s21\n7.0e9,1.0,0.0\n7.0e9,0.5,0.0\n"
        )
        with pytest.raises(ValidationError):
            load_trace(path)


class TestPlanFiles:
    def test_round_trip_with_provenance(self, tmp_path):
        plan = TrimPlan(
            actions=[
                TrimAction(
                    resonator_id="p00", n_remove=2, delta_l=1e-5,
                    predicted_delta_f=-20.9e6, predicted_f=7.479e9,
                )
            ],
            objective_before=21e6,
            objective_after=0.1e6,
            cycle_index=1,
        )
        path = tmp_path / "plan.json"
        save_plan(plan, path, provenance={"slope_mode": "fitted", "nu_rho_m_per_s": 1.076e8})
        loaded, prov = load_plan(path)
        assert loaded == plan
        assert prov["slope_mode"] == "fitted"
        doc = json.loads(path.read_text())
        assert doc["version"] == 1

    def test_version_check(self, tmp_path):
        path = tmp_path / "plan.json"
        path.write_text(json.dumps({"version": 12, "actions": []}))
        with pytest.raises(ValidationError):
            load_plan(path)

    def test_malformed_action(self, tmp_path):
        path = tmp_path / "plan.json"
        path.write_text(json.dumps({"version": 1, "actions": [{"n_remove": 1}]}))
        with pytest.raises(ValidationError):
            load_plan(path)
