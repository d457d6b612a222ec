#include "havt/model/network.hpp"

#include "havt/errors.hpp"

namespace havt {

HavtDetectorImpl::HavtDetectorImpl(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int e = cfg_.embed;
  visual = register_module("visual", VisualEncoder(cfg_));
  if (cfg_.fusion != FusionMode::kNone) audio = register_module("audio", AudioEncoder(cfg_));
  const auto extents = cfg_.temporal_extents();
  // The coarsest squeezed map feeds the tokens, so it exists for havt fusion
  // even when its detection level is disabled.
  for (int l = 0; l < 3; ++l) {
    const int s = kStrides[l];
    if (cfg_.scale_enabled(s) || (s == 32 && cfg_.fusion == FusionMode::kHavt)) {
      squeeze.emplace(s, register_module("squeeze" + std::to_string(s),
                                         TemporalSqueeze(cfg_.visual_widths[l + 1], extents[l], e)));
    }
  }
  if (cfg_.fusion == FusionMode::kHavt) {
    const int g = cfg_.grid(32);
    patchify = register_module("patchify", Patchify(e, std::array<int, 2>{g, g}, cfg_.audio_widths.back(), cfg_.audio_grid(), e));
    joint = register_module("joint", JointEncoder(e, cfg_.heads, cfg_.mlp_ratio, cfg_.attn_layers));
    spca = register_module("spca", Spca(e, cfg_.heads, cfg_.mlp_ratio, cfg_.spca_layers, cfg_.n_scaq));
  }
  fuse = register_module("fuse", PyramidFuse(cfg_, cfg_.audio_widths.back()));
  for (int s : kStrides) {
    if (!cfg_.scale_enabled(s)) continue;
    heads.emplace(s, register_module("head" + std::to_string(s), DetectionHead(e, cfg_.head, cfg_.obj_prior)));
  }
}

NetworkOutput HavtDetectorImpl::forward(const torch::Tensor& video, const torch::Tensor& mel, bool trace) {
  ForwardTrace tr;
  tr.pyramid = visual(video);
  for (int l = 0; l < 3; ++l) {
    const int s = kStrides[l];
    auto it = squeeze.find(s);
    if (it != squeeze.end()) tr.squeezed[s] = it->second(tr.pyramid.level(l));
  }
  torch::Tensor context;
  if (cfg_.fusion != FusionMode::kNone) {
    if (video.size(0) != mel.size(0)) throw ShapeError("video and audio batch sizes differ");
    tr.audio_map = audio(mel);
    if (cfg_.fusion == FusionMode::kConcat) {
      context = tr.audio_map.mean({2, 3});
    } else {
      tr.tokens = patchify(tr.squeezed.at(32), tr.audio_map);
      tr.encoded = joint(tr.tokens, trace ? &tr.self_attention : nullptr);
      tr.avce = spca(tr.encoded.tokens, trace ? &tr.cross_attention : nullptr);
      context = tr.avce;
    }
  }
  NetworkOutput out;
  for (auto& [s, head] : heads) {
    torch::Tensor f = fuse(s, tr.squeezed.at(s), context);
    out.heads[s] = head(f);
    if (trace) tr.fused[s] = f;
  }
  if (trace) out.trace = std::move(tr);
  return out;
}

}  // namespace havt
