import torch
import torch.nn as nn
from texture.texture_error import ChannelMismatch

LEAKY_SLOPE = 0.2


class GatedConv2d(nn.Module):
    """Gated convolution: IN(phi((W_f * x) . sigmoid(W_g * x))).

    "same" padding, so the spatial size only changes with the stride.
    """

    def __init__(
        self,
        inChannels,
        outChannels,
        kernelSize=3,
        stride=1,
        dilation=1,
        paddingMode="zeros",
    ):
        super().__init__()
        self.inChannels = inChannels
        self.outChannels = outChannels
        self.kernelSize = kernelSize
        self.stride = stride
        self.dilation = dilation
        padding = dilation * (kernelSize - 1) // 2
        self.convFeature = nn.Conv2d(
            inChannels,
            outChannels,
            kernelSize,
            stride=stride,
            padding=padding,
            dilation=dilation,
            padding_mode=paddingMode,
        )
        self.convGate = nn.Conv2d(
            inChannels,
            outChannels,
            kernelSize,
            stride=stride,
            padding=padding,
            dilation=dilation,
            padding_mode=paddingMode,
        )
        self.activation = nn.LeakyReLU(LEAKY_SLOPE)
        self.norm = nn.InstanceNorm2d(outChannels, affine=False)

    def verifyChannels(self, featureIn):
        if featureIn.dim() != 4 or featureIn.shape[1] != self.inChannels:
            raise ChannelMismatch(
                f"gated conv expects {self.inChannels} input channels, got shape {tuple(featureIn.shape)}"
            )

    def gate(self, featureIn):
        self.verifyChannels(featureIn)
        return torch.sigmoid(self.convGate(featureIn))

    def forward(self, featureIn):
        gating = self.gate(featureIn)
        return self.norm(self.activation(self.convFeature(featureIn) * gating))

    def describe(self):
        return ("gated", self.inChannels, self.outChannels, self.kernelSize, self.stride, self.dilation)


def gatedConv(featureIn, layer):
    return layer(featureIn)
