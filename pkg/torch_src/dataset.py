from torch.utils.data import Dataset

from preference.batch_sampler import RelationBatch, RelationSampler
from torch_util import make_rng


class RelationBatchDataset(Dataset):
    """
    The batches of one training epoch. Batch i is sampled from a generator seeded by (seed, epoch, i), so the
    result does not depend on the number of loader workers or on the order in which they run.
    """

    def __init__(self, sampler: RelationSampler, batch_size: int, seed: int, epoch: int, num_batches: int):
        """
        :param sampler: relation sampler over the training tasks
        :param batch_size: relations per batch
        :param seed: run seed
        :param epoch: epoch index
        :param num_batches: batches per epoch (one per training task)
        """
        assert num_batches > 0, "An epoch needs at least one batch"
        self.sampler = sampler
        self.batch_size = batch_size
        self.seed = seed
        self.epoch = epoch
        self.num_batches = num_batches

    def __len__(self):
        return self.num_batches

    def __getitem__(self, index: int) -> RelationBatch:
        if not 0 <= index < self.num_batches:
            raise IndexError(index)
        return self.sampler.sample(make_rng(self.seed, "batch", self.epoch, index), self.batch_size)


def keep_batch(batch: RelationBatch) -> RelationBatch:
    """
    Collate function for loaders with batch_size=None: batches are already assembled by the dataset.
    """
    return batch
