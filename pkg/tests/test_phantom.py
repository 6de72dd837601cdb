import math

import numpy as np
import pytest

from crossscan.errors import ConfigError, UnsupportedFieldError
from crossscan.phantom import (BRAINWEB_15T, BRAINWEB_30T, AcquisitionProtocol,
                               CLASSIFICATION_TISSUES, PROTOCOL_PRESETS,
                               RELAXATION_TABLE, TissueId,
                               brain_mask_is_connected, generate_phantom,
                               load_protocols, read_label_map,
                               read_scan_intensities, signal, simulate_scan,
                               write_label_map, write_scan)


def closed_form(rho, t1, t2, theta_deg, tr, te):
    # independent scalar evaluation of the steady-state signal
    th = math.radians(theta_deg)
    e1 = math.exp(-tr / t1)
    return rho * math.sin(th) * (1 - e1) / (1 - math.cos(th) * e1) * math.exp(-te / t2)


class TestTissueTable:
    def test_ten_tissues(self):
        assert len(TissueId) == 10
        assert TissueId.BKG == 0
        assert TissueId.BKG not in CLASSIFICATION_TISSUES
        assert CLASSIFICATION_TISSUES == (TissueId.CSF, TissueId.GM, TissueId.WM)

    def test_csf_row_values(self):
        e = RELAXATION_TABLE[TissueId.CSF]
        assert (e.proton_density, e.t1_15, e.t2_15, e.t1_30, e.t2_30) == \
            (100.0, 4326.0, 791.0, 4313.0, 503.0)

    def test_all_times_positive_and_density_bounded(self):
        for entry in RELAXATION_TABLE.values():
            assert 0.0 <= entry.proton_density <= 100.0
            for t in (entry.t1_15, entry.t2_15, entry.t1_30, entry.t2_30):
                assert t > 0.0

    def test_skull_has_zero_density_and_sub_ms_t2(self):
        e = RELAXATION_TABLE[TissueId.SKULL]
        assert e.proton_density == 0.0
        assert 0.0 < e.t2_15 < 1.0 and 0.0 < e.t2_30 < 1.0


class TestProtocols:
    def test_presets_match_published_parameters(self):
        p = PROTOCOL_PRESETS["Brainweb1.5T"]
        assert (p.b0, p.flip_deg, p.tr_ms, p.te_ms) == (1.5, 20.0, 13.8, 2.8)
        p = PROTOCOL_PRESETS["Brainweb3.0T"]
        assert (p.b0, p.flip_deg, p.tr_ms, p.te_ms) == (3.0, 90.0, 7.9, 4.5)

    def test_invalid_protocols_rejected(self):
        with pytest.raises(ConfigError):
            AcquisitionProtocol("bad", 1.5, 0.0, 10.0, 5.0)
        with pytest.raises(ConfigError):
            AcquisitionProtocol("bad", 1.5, 20.0, 5.0, 10.0)

    def test_protocol_json_roundtrip(self, tmp_path):
        path = tmp_path / "protocols.json"
        path.write_text('[{"name": "fast", "b0": 3.0, "flip_deg": 12,'
                        ' "tr_ms": 9.0, "te_ms": 3.0, "noise_sigma": 0.01}]')
        protos = load_protocols(path)
        assert protos["fast"].b0 == 3.0
        assert protos["fast"].noise_sigma == 0.01

    def test_bad_protocol_file(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_protocols(path)


class TestSignal:
    def test_skull_signal_is_zero_at_both_fields(self):
        assert signal(TissueId.SKULL, BRAINWEB_15T) == 0.0
        assert signal(TissueId.SKULL, BRAINWEB_30T) == 0.0

    def test_csf_at_low_field_matches_oracle(self):
        expected = closed_form(100, 4326, 791, 20, 13.8, 2.8)
        got = signal(TissueId.CSF, BRAINWEB_15T)
        assert got == pytest.approx(expected, rel=1e-12)
        assert got == pytest.approx(1.7148, abs=5e-5)

    def test_gm_at_high_field_matches_oracle(self):
        expected = closed_form(86, 1820, 99, 90, 7.9, 4.5)
        got = signal(TissueId.GM, BRAINWEB_30T)
        assert got == pytest.approx(expected, rel=1e-12)
        assert got == pytest.approx(0.3559, abs=5e-5)

    def test_signal_in_zero_density_bound(self):
        for tissue, entry in RELAXATION_TABLE.items():
            for proto in (BRAINWEB_15T, BRAINWEB_30T):
                s = signal(tissue, proto)
                assert 0.0 <= s <= entry.proton_density
                if entry.proton_density > 0:
                    assert s > 0.0

    def test_monotone_decreasing_in_te(self):
        for tissue in CLASSIFICATION_TISSUES:
            values = [signal(tissue, AcquisitionProtocol("p", 1.5, 20.0, 50.0, te))
                      for te in (1.0, 5.0, 10.0, 25.0, 45.0)]
            assert all(a > b for a, b in zip(values, values[1:]))

    def test_unsupported_field_strength(self):
        proto = AcquisitionProtocol("odd", 7.0, 20.0, 13.8, 2.8)
        with pytest.raises(UnsupportedFieldError):
            signal(TissueId.GM, proto)

    def test_background_has_no_entry(self):
        with pytest.raises(KeyError):
            signal(TissueId.BKG, BRAINWEB_15T)


class TestPhantom:
    def test_small_dimensions_rejected(self):
        with pytest.raises(ValueError):
            generate_phantom(1, 63, 128)
        with pytest.raises(ValueError):
            generate_phantom(1, 128, 32)

    def test_expected_tissues_present(self):
        m = generate_phantom(7, 256, 256)
        present = set(np.unique(m.labels))
        assert present == {TissueId.BKG, TissueId.CSF, TissueId.GM, TissueId.WM}

    def test_deterministic(self):
        a = generate_phantom(7, 256, 256)
        b = generate_phantom(7, 256, 256)
        assert np.array_equal(a.labels, b.labels)

    def test_different_seeds_differ(self):
        a = generate_phantom(7, 256, 256)
        b = generate_phantom(8, 256, 256)
        assert (a.labels != b.labels).sum() >= 1

    def test_tissue_floors_and_connectivity_over_seed_range(self):
        # every seed 0..99 must keep >= 1% of brain per tissue and a
        # 4-connected brain mask, at the minimum supported size
        for seed in range(100):
            m = generate_phantom(seed, 64, 64)
            brain = m.labels != TissueId.BKG
            n_brain = brain.sum()
            for tissue in CLASSIFICATION_TISSUES:
                frac = (m.labels == tissue).sum() / n_brain
                assert frac >= 0.01, f"seed {seed}: {tissue.name} at {frac:.3%}"
            assert brain_mask_is_connected(m), f"seed {seed}: disconnected mask"


class TestSimulateScan:
    def test_noiseless_tissue_is_constant(self):
        m = generate_phantom(3, 128, 128)
        proto = AcquisitionProtocol("clean", 1.5, 20.0, 13.8, 2.8, noise_sigma=0.0)
        scan = simulate_scan(m, proto, 0, 5)
        csf = scan.intensities[m.labels == TissueId.CSF]
        assert np.unique(csf).size == 1

    def test_deterministic_per_noise_seed(self):
        m = generate_phantom(3, 128, 128)
        a = simulate_scan(m, BRAINWEB_15T, 0, 42)
        b = simulate_scan(m, BRAINWEB_15T, 0, 42)
        c = simulate_scan(m, BRAINWEB_15T, 0, 43)
        assert np.array_equal(a.intensities, b.intensities)
        assert not np.array_equal(a.intensities, c.intensities)

    def test_normalization_and_nonnegativity(self):
        m = generate_phantom(4, 128, 128)
        scan = simulate_scan(m, BRAINWEB_30T, 1, 9)
        assert (scan.intensities >= 0.0).all()
        assert np.isfinite(scan.intensities).all()
        brain = scan.intensities[m.labels != TissueId.BKG]
        assert np.percentile(brain, 99.0) == pytest.approx(1.0, rel=1e-9)

    def test_background_is_noise_floor(self):
        m = generate_phantom(5, 128, 128)
        scan = simulate_scan(m, BRAINWEB_15T, 0, 6)
        bkg = scan.intensities[m.labels == TissueId.BKG]
        wm = scan.intensities[m.labels == TissueId.WM]
        # Rayleigh floor sits far below tissue signal
        assert bkg.mean() < 0.2 * wm.mean()

    def test_noise_level_matches_rician_prediction(self):
        # a uniform WM slab: relative std of the magnitude image at high SNR
        # approaches the per-channel noise fraction
        from crossscan.phantom import TissueLabelMap
        labels = np.full((128, 128), TissueId.WM, dtype=np.uint8)
        m = TissueLabelMap(labels, 0)
        scan = simulate_scan(m, BRAINWEB_15T, 0, 77)
        rel = scan.intensities.std() / scan.intensities.mean()
        assert labels.size >= 10_000
        assert 0.7 * 0.02 <= rel <= 1.3 * 0.02

    def test_bad_scanner_id(self):
        m = generate_phantom(3, 64, 64)
        with pytest.raises(ValueError):
            simulate_scan(m, BRAINWEB_15T, 2, 1)


class TestFileFormats:
    def test_label_map_roundtrip(self, tmp_path):
        m = generate_phantom(9, 96, 64)
        path = tmp_path / "m.lab"
        write_label_map(m, path)
        header = path.read_bytes().split(b"\n", 1)[0]
        assert header == b"MRAI-LAB v1 96 64"
        back = read_label_map(path)
        assert np.array_equal(back.labels, m.labels)

    def test_scan_roundtrip(self, tmp_path):
        m = generate_phantom(9, 64, 96)
        scan = simulate_scan(m, BRAINWEB_15T, 0, 1)
        path = tmp_path / "s.scan"
        write_scan(scan, path)
        header = path.read_bytes().split(b"\n", 1)[0]
        assert header == b"MRAI-SCAN v1 64 96"
        back = read_scan_intensities(path)
        assert back.shape == (96, 64)
        assert np.allclose(back, scan.intensities, atol=1e-6)

    def test_truncated_label_map_rejected(self, tmp_path):
        m = generate_phantom(9, 64, 64)
        path = tmp_path / "m.lab"
        write_label_map(m, path)
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(ConfigError):
            read_label_map(path)

    def test_wrong_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.lab"
        path.write_bytes(b"NOT-A-MAP 4 4\n" + b"\x00" * 16)
        with pytest.raises(ConfigError):
            read_label_map(path)
