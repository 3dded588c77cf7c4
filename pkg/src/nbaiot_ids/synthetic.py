"""Write a synthetic dataset in the N-BaIoT directory layout.

Useful for exercising the full pipeline without the real download. Column names
follow the real header; values are class-conditional lognormal clouds whose feature
scales span several orders of magnitude, as in the real traffic statistics.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from nbaiot_ids.ingest import N_FEATURES

_WINDOWS = ("L5", "L3", "L1", "L0.1", "L0.01")
_FILES = {
    "benign": "benign_traffic.csv",
    "gafgyt_combo": "gafgyt_attacks/combo.csv",
    "gafgyt_junk": "gafgyt_attacks/junk.csv",
    "gafgyt_scan": "gafgyt_attacks/scan.csv",
    "gafgyt_tcp": "gafgyt_attacks/tcp.csv",
    "gafgyt_udp": "gafgyt_attacks/udp.csv",
    "mirai_ack": "mirai_attacks/ack.csv",
    "mirai_scan": "mirai_attacks/scan.csv",
    "mirai_syn": "mirai_attacks/syn.csv",
    "mirai_udp": "mirai_attacks/udp.csv",
    "mirai_udpplain": "mirai_attacks/udpplain.csv",
}


def feature_names() -> list[str]:
    names = []
    for w in _WINDOWS:
        names += [f"MI_dir_{w}_{s}" for s in ("weight", "mean", "variance")]
    for w in _WINDOWS:
        names += [f"H_{w}_{s}" for s in ("weight", "mean", "variance")]
    for w in _WINDOWS:
        names += [f"HH_{w}_{s}" for s in ("weight", "mean", "std", "magnitude", "radius", "covariance", "pcc")]
    for w in _WINDOWS:
        names += [f"HH_jit_{w}_{s}" for s in ("weight", "mean", "variance")]
    for w in _WINDOWS:
        names += [f"HpHp_{w}_{s}" for s in ("weight", "mean", "std", "magnitude", "radius", "covariance", "pcc")]
    assert len(names) == N_FEATURES
    return names


def write_synthetic_nbaiot(
    root: str | Path,
    rows_per_file: int = 200,
    devices: tuple[str, ...] = ("Danmini_Doorbell", "Ecobee_Thermostat"),
    seed: int = 0,
    separation: float = 1.0,
) -> Path:
    """Create ``root/<device>/...`` CSVs for all eleven traffic types.

    ``separation`` scales the distance between class centres (in log space);
    smaller values make the classes overlap more.
    """
    root = Path(root)
    rng = np.random.default_rng(seed)
    header = ",".join(feature_names())
    log_scale = rng.uniform(-2.0, 6.0, size=N_FEATURES)
    centres = {name: log_scale + separation * rng.normal(0.0, 1.0, size=N_FEATURES) for name in _FILES}
    for device in devices:
        shift = rng.normal(0.0, 0.05, size=N_FEATURES)
        for name, rel in _FILES.items():
            path = root / device / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            logs = centres[name] + shift + rng.normal(0.0, 0.35, size=(rows_per_file, N_FEATURES))
            values = np.exp(logs)
            np.savetxt(path, values, delimiter=",", header=header, comments="", fmt="%.9g")
    return root
