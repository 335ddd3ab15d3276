"""A fast synthetic setup shared by trainer, checkpoint and CLI tests."""
from bridgeprompt.dataset_io import SynthConfig, generate_synthetic
from bridgeprompt.encoders import ModelConfig
from bridgeprompt.sampler import SampleConfig
from bridgeprompt.trainer import TrainConfig


def small_setup(n_videos=6, **train_kw):
    vocab, videos = generate_synthetic(SynthConfig(n_actions=4, n_activities=2, actions_per_activity=(2, 3),
                                                   mean_segment_len=6, feature_dim=8, n_videos=n_videos))
    samp = SampleConfig(window_len=8, schedules=[(1, 1.0)], max_steps=3)
    mcfg = ModelConfig(embed_dim=16, fusion_layers=1, fusion_heads=2, text_layers=1, text_width=16, text_heads=2,
                       max_text_len=32, frame_input_dim=8)
    kw = dict(batch_size=4, epochs=2, base_lr=1e-3)
    kw.update(train_kw)
    return vocab, videos, samp, mcfg, TrainConfig(**kw)
