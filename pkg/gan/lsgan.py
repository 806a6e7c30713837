import torch
from gan.gan_error import EmptyBatch


def verifyNonEmpty(*scoreBatches):
    for scores in scoreBatches:
        if scores is None or torch.as_tensor(scores).numel() == 0:
            raise EmptyBatch("discriminator score batch is empty")


def lsganDiscriminatorLoss(dReal, dFake):
    verifyNonEmpty(dReal, dFake)
    return 0.5 * torch.mean((dReal - 1) ** 2) + 0.5 * torch.mean(dFake**2)


def lsganGeneratorLoss(dFake):
    verifyNonEmpty(dFake)
    return 0.5 * torch.mean((dFake - 1) ** 2)
