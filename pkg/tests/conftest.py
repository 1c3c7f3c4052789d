import numpy as np
import pytest

from deface_bench.datamodel import Dataset, DemographicKey, FaceRecord, Gender, Race
from deface_bench.score_io import EmbeddingTable

ASIAN_F = DemographicKey(race=Race.ASIAN, gender=Gender.FEMALE)
ASIAN_M = DemographicKey(race=Race.ASIAN, gender=Gender.MALE)
BLACK_F = DemographicKey(race=Race.BLACK, gender=Gender.FEMALE)


def make_dataset(n_identities=4, images_per_identity=3, groups=(ASIAN_F, ASIAN_M), name="toy"):
    """Round-robin identities over the groups, zero-padded stable ids."""
    records = []
    for i in range(n_identities):
        demo = groups[i % len(groups)]
        identity = f"id{i:03d}"
        for j in range(images_per_identity):
            records.append(
                FaceRecord(image_id=f"{identity}-{j:02d}", identity_id=identity, demographic=demo)
            )
    return Dataset(name=name, records=tuple(records))


def clustered_embeddings(dataset, dim=8, spread=0.05, seed=0, model_tag="toy"):
    """One tight unit-norm cluster per identity; spread scales the scatter."""
    rng = np.random.default_rng(seed)
    centers = {}
    for identity in sorted(dataset.identities()):
        v = rng.normal(size=dim)
        centers[identity] = v / np.linalg.norm(v)
    entries = {}
    for image_id in dataset.image_ids():
        rec = dataset.record(image_id)
        entries[image_id] = centers[rec.identity_id] + spread * rng.normal(size=dim)
    return EmbeddingTable(model_tag=model_tag, dim=dim, entries=entries)


@pytest.fixture
def toy_dataset():
    return make_dataset()
