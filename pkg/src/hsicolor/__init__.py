"""Infrared hyperspectral cube colorization.

A conditional-GAN toolkit that maps H x W x L thermal radiance cubes to
plausible RGB images. The generator interleaves state-space spatial scans,
wavelet/Fourier frequency enhancement, deformable local gating and spectral
scans inside residual groups; training pairs a patch discriminator with a
feature-statistics discriminator and adds content and segmentation guidance.
"""
from .attention import (Cbam, CascadeDeformable, ChannelGate, DeformableUnit,
                        DepthwiseSeparableConv, LocalGating, SaliencyMasks,
                        SparsifyStage, SpatialGate, deformable_sample,
                        sparsify_parts)
from .data import (CubeFormatError, SceneSample, class_anchor,
                   extract_patches, load_dataset, normalize_cube,
                   patch_origins, random_crop_pair, read_cube, read_pgm,
                   read_ppm, save_dataset, scene_seed, scene_signatures,
                   synth_dataset, synth_scene, validate_sample, write_cube,
                   write_pgm, write_ppm)
from .discriminators import PatchDiscriminator, StatsDiscriminator
from .frequency import (FourierGate, FrequencyEnhancement, SubbandRefine,
                        complex_gelu, dwt2, gated_residual, iwt2)
from .fusion import (ChannelLayerNorm, Colorizer, MultiDomainFusion,
                     ResidualConvBlock, ResidualGroup, SpatialSpectralBlock)
from .losses import (ContentLoss, LossWeights, PerceptualFeatures,
                     SegmentationNet, bce_logits, discriminator_loss,
                     fft_amplitude, gaussian_window,
                     generator_adversarial_loss, luma, pixel_accuracy,
                     pretrain_segmentation, segmentation_loss,
                     sobel_magnitude, ssim_index, total_variation)
from .metrics import metric_report, parse_report, psnr, ssim, uiqi
from .statespace import (SpatialScan2D, SpectralScanBranch, cross_merge,
                         cross_scan, selective_scan)
from .train import (DatasetSpec, TrainConfig, Trainer, TrainResult,
                    colorize_cube, evaluate, evaluate_generator, infer,
                    load_generator, lr_schedule, seg_schedule, train)

__version__ = "0.1.0"

__all__ = [
    "Cbam", "CascadeDeformable", "ChannelGate", "DeformableUnit",
    "DepthwiseSeparableConv", "LocalGating", "SaliencyMasks", "SparsifyStage",
    "SpatialGate", "deformable_sample", "sparsify_parts",
    "CubeFormatError", "SceneSample", "class_anchor", "extract_patches",
    "load_dataset", "normalize_cube", "patch_origins", "random_crop_pair",
    "read_cube", "read_pgm", "read_ppm", "save_dataset", "scene_seed",
    "scene_signatures", "synth_dataset", "synth_scene", "validate_sample",
    "write_cube", "write_pgm", "write_ppm",
    "PatchDiscriminator", "StatsDiscriminator",
    "FourierGate", "FrequencyEnhancement", "SubbandRefine", "complex_gelu",
    "dwt2", "gated_residual", "iwt2",
    "ChannelLayerNorm", "Colorizer", "MultiDomainFusion", "ResidualConvBlock",
    "ResidualGroup", "SpatialSpectralBlock",
    "ContentLoss", "LossWeights", "PerceptualFeatures", "SegmentationNet",
    "bce_logits", "discriminator_loss", "fft_amplitude", "gaussian_window",
    "generator_adversarial_loss", "luma", "pixel_accuracy",
    "pretrain_segmentation", "segmentation_loss", "sobel_magnitude",
    "ssim_index", "total_variation",
    "metric_report", "parse_report", "psnr", "ssim", "uiqi",
    "SpatialScan2D", "SpectralScanBranch", "cross_merge", "cross_scan",
    "selective_scan",
    "DatasetSpec", "TrainConfig", "Trainer", "TrainResult", "colorize_cube",
    "evaluate", "evaluate_generator", "infer", "load_generator",
    "lr_schedule", "seg_schedule", "train",
    "__version__",
]
