import pytest
import torch
import torch.nn as nn
from texture.gated_conv import GatedConv2d, gatedConv
from texture.texture_error import ChannelMismatch


def test_gating_values_lie_strictly_between_zero_and_one():
    torch.manual_seed(0)
    layer = GatedConv2d(3, 5)
    for scale in (0.1, 1.0, 10.0):
        gating = layer.gate(torch.randn(2, 3, 16, 16) * scale)
        assert gating.min() > 0 and gating.max() < 1


def test_closed_gate_gives_zero_output():
    torch.manual_seed(0)
    layer = GatedConv2d(2, 3)
    with torch.no_grad():
        layer.convGate.weight.zero_()
        layer.convGate.bias.fill_(-1000.0)
    out = gatedConv(torch.randn(1, 2, 8, 8), layer)
    assert torch.count_nonzero(out) == 0


def test_open_gate_with_identity_kernel():
    layer = GatedConv2d(2, 2).double()
    with torch.no_grad():
        layer.convFeature.weight.zero_()
        layer.convFeature.bias.zero_()
        for channel in range(2):
            layer.convFeature.weight[channel, channel, 1, 1] = 1.0
        layer.convGate.weight.zero_()
        layer.convGate.bias.fill_(1000.0)
    features = torch.randn(1, 2, 8, 8, dtype=torch.float64)
    expected = nn.InstanceNorm2d(2)(nn.LeakyReLU(0.2)(features))
    assert torch.allclose(layer(features), expected, atol=1e-12)


def test_same_padding_and_instance_statistics():
    torch.manual_seed(1)
    layer = GatedConv2d(1, 4).double()
    out = layer(torch.randn(1, 1, 8, 8, dtype=torch.float64) * 10)
    assert out.shape == (1, 4, 8, 8)
    mean = out.mean(dim=(2, 3))
    variance = out.var(dim=(2, 3), unbiased=False)
    assert torch.allclose(mean, torch.zeros_like(mean), atol=1e-4)
    assert torch.allclose(variance, torch.ones_like(variance), atol=1e-4)


@pytest.mark.parametrize("dilation", [2, 4, 8, 16])
def test_dilated_layers_keep_the_spatial_size(dilation):
    layer = GatedConv2d(3, 3, dilation=dilation)
    assert layer(torch.randn(1, 3, 20, 20)).shape == (1, 3, 20, 20)


def test_stride_two_halves_the_spatial_size():
    layer = GatedConv2d(3, 6, stride=2)
    assert layer(torch.randn(1, 3, 16, 16)).shape == (1, 6, 8, 8)


def test_channel_mismatch():
    layer = GatedConv2d(4, 8)
    with pytest.raises(ChannelMismatch):
        layer(torch.randn(1, 3, 8, 8))
