"""Depth-guided refocusing toolkit: bokeh rendering with a brute-force
oracle, focus-stacking algebra, DoF-pair simulation, a verified toy
rectified-flow trainer, benchmark tooling, and an interactive HTTP service.
"""

from .raster import (
    DecodeError,
    DepthMap,
    RasterImage,
    SceneSpec,
    generate_scene,
    laplacian_map,
    laplacian_variance,
    luminance,
    read_depth,
    read_image,
    write_depth,
    write_image,
)
from .render import RenderParams, coc_radius, refocus_classical, render_fast, render_oracle
from .stacking import (
    LatentCodec,
    LatentMask,
    StackMask,
    downsample_mask,
    latent_stack_blend,
    stack_blend,
    stack_mask,
)
from .simulate import (
    CameraCondition,
    DofVariant,
    SamplerSchedule,
    filter_all_in_focus,
    focus_set,
    perturb_depth,
    read_manifest,
    sample_pair,
    simulate_variants,
    synth_probability,
    write_manifest,
)
from .flow import (
    FlowSample,
    LossBreakdown,
    TrainConfig,
    Trainer,
    flow_loss,
    gradient_check,
    load_checkpoint,
    perturb,
    predict_velocity,
    sample_image,
    save_checkpoint,
    stacking_loss,
    train_step,
)
from .nn import VelocityPredictor, camera_token
from .metrics import lvcorr, mae, pearson, psnr
from .benchmark import BenchmarkScene, EvalReport, build_benchmark, evaluate

__version__ = "0.1.0"
