import os
from pathlib import Path

import numpy as np
import pytest

from idsample.ingest import Dataset

# Per-class counts of the NSL-KDD and UNSW-NB15 full datasets after preprocessing.
NSL_COUNTS = {
    "Normal.": 87832, "neptune.": 51820, "back.": 968, "teardrop.": 918, "satan.": 906,
    "warezclient.": 893, "ipsweep.": 651, "smurf.": 641, "portsweep.": 416, "pod.": 206,
    "nmap.": 158, "guess_passwd.": 53, "buffer_overflow.": 30, "warezmaster.": 20,
    "land.": 19, "imap.": 12, "rootkit.": 10, "loadmodule.": 9, "ftp_write.": 8,
    "multihop.": 7, "phf.": 4, "perl.": 3, "spy.": 2,
}
UNSW_COUNTS = {
    "Normal": 34205, "Exploits": 7609, "Fuzzers": 4838, "Generic": 3657,
    "Reconnaissance": 2703, "DoS": 1718, "Analysis": 446, "Shellcode": 378,
    "Backdoor": 346, "Worms": 44,
}
BOTNETIOT_COUNTS = {
    "Normal": 555932, "udp": 2176365, "tcp": 859850, "scan": 793090, "syn": 733299,
    "ack": 643821, "udpplain": 523304, "combo": 515156, "junk": 261789,
}

DATA_DIR = os.environ.get("IDSAMPLE_DATA_DIR")


def make_dataset(counts, normal, n_features=3, seed=0, shuffle=True):
    """Synthetic dataset with the given per-class counts.

    Feature j of a row is Gaussian noise shifted by its class index, so
    classes differ in mean and sub-sampling changes feature means.
    """
    rng = np.random.default_rng(seed)
    names = sorted(counts)
    ids = np.concatenate([np.full(counts[n], names.index(n)) for n in names])
    if shuffle:
        ids = rng.permutation(ids)
    features = rng.standard_normal((len(ids), n_features)) + ids[:, None]
    labels = np.array([0 if names[i] == normal else 1 for i in ids], dtype=np.int8)
    return Dataset(
        features=features,
        feature_names=tuple(f"f{j}" for j in range(n_features)),
        binary_label=labels,
        traffic_type=ids,
        class_names=tuple(names),
        normal_class=normal,
    )


@pytest.fixture(scope="session")
def nsl_like():
    return make_dataset(NSL_COUNTS, "Normal.", n_features=4, seed=1)


@pytest.fixture(scope="session")
def unsw_like():
    return make_dataset(UNSW_COUNTS, "Normal", n_features=4, seed=2)


@pytest.fixture
def data_file():
    """Path of a real dataset under $IDSAMPLE_DATA_DIR, or skip."""
    def _get(name):
        if not DATA_DIR:
            pytest.skip("IDSAMPLE_DATA_DIR not set; real benchmark data unavailable")
        path = Path(DATA_DIR) / name
        if not path.exists():
            pytest.skip(f"{path} not present")
        return path
    return _get
