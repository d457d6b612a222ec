#include "havt/model/fusion.hpp"

#include <cmath>

#include "havt/errors.hpp"
#include "havt/tensor.hpp"

namespace havt {
namespace {

torch::Tensor trunc_normal(std::vector<int64_t> shape, double std) {
  // Redraw entries beyond two standard deviations.
  torch::Tensor t = torch::randn(shape) * std;
  for (torch::Tensor out = t.abs() > 2 * std; out.any().item<bool>(); out = t.abs() > 2 * std) {
    t = torch::where(out, torch::randn(shape) * std, t);
  }
  return t;
}

// [B, C, r, c] -> [B, r*c, C]
torch::Tensor cells_to_tokens(const torch::Tensor& m) { return m.flatten(2).transpose(1, 2); }

}  // namespace

PatchifyImpl::PatchifyImpl(int visual_channels, std::array<int, 2> visual_grid, int audio_channels,
                           std::array<int, 2> audio_grid, int embed)
    : vgrid_(visual_grid), agrid_(audio_grid) {
  visual_proj = register_module(
      "visual_proj", torch::nn::Linear(torch::nn::LinearOptions(visual_channels, embed).bias(false)));
  audio_proj = register_module(
      "audio_proj", torch::nn::Linear(torch::nn::LinearOptions(audio_channels, embed).bias(false)));
  visual_pos = register_parameter("visual_pos", trunc_normal({visual_grid[0] * visual_grid[1], embed}, 0.02));
  audio_pos = register_parameter("audio_pos", trunc_normal({audio_grid[0] * audio_grid[1], embed}, 0.02));
  modality = register_parameter("modality", trunc_normal({2, embed}, 0.02));
}

TokenSequence PatchifyImpl::forward(const torch::Tensor& vmap, const torch::Tensor& amap) {
  if (vmap.dim() != 4 || vmap.size(2) != vgrid_[0] || vmap.size(3) != vgrid_[1]) {
    throw ShapeError("patchify: visual map has shape " + shape_to_string(vmap.sizes().vec()));
  }
  if (amap.dim() != 4 || amap.size(2) != agrid_[0] || amap.size(3) != agrid_[1]) {
    throw ShapeError("patchify: audio map has shape " + shape_to_string(amap.sizes().vec()));
  }
  TokenSequence seq;
  torch::Tensor vt = visual_proj(cells_to_tokens(vmap)) + visual_pos + modality[0];
  torch::Tensor at = audio_proj(cells_to_tokens(amap)) + audio_pos + modality[1];
  seq.tokens = torch::cat({vt, at}, 1);
  seq.n_visual = vt.size(1);
  seq.n_audio = at.size(1);
  for (int r = 0; r < vgrid_[0]; ++r) {
    for (int c = 0; c < vgrid_[1]; ++c) {
      seq.tags.push_back(Modality::kVisual);
      seq.positions.push_back({r, c});
    }
  }
  for (int r = 0; r < agrid_[0]; ++r) {
    for (int c = 0; c < agrid_[1]; ++c) {
      seq.tags.push_back(Modality::kAudio);
      seq.positions.push_back({r, c});
    }
  }
  return seq;
}

MultiHeadAttentionImpl::MultiHeadAttentionImpl(int embed, int heads) : heads_(heads) {
  q = register_module("q", torch::nn::Linear(embed, embed));
  k = register_module("k", torch::nn::Linear(embed, embed));
  v = register_module("v", torch::nn::Linear(embed, embed));
  out = register_module("out", torch::nn::Linear(embed, embed));
}

torch::Tensor MultiHeadAttentionImpl::forward(const torch::Tensor& query, const torch::Tensor& memory,
                                              AttentionProbe* probe) {
  const int64_t b = query.size(0), nq = query.size(1), nk = memory.size(1), e = query.size(2);
  const int64_t d = e / heads_;
  auto split = [&](const torch::Tensor& x, int64_t n) { return x.view({b, n, heads_, d}).transpose(1, 2); };
  torch::Tensor qh = split(q(query), nq), kh = split(k(memory), nk), vh = split(v(memory), nk);
  torch::Tensor w;
  if (force_identity) {
    if (nq != nk) throw ShapeError("identity attention needs as many queries as keys");
    w = torch::eye(nq, query.options()).expand({b, heads_, nq, nk});
  } else {
    w = torch::softmax(torch::matmul(qh, kh.transpose(-2, -1)) / std::sqrt(double(d)), -1);
  }
  if (probe) probe->push_back(w.detach());
  torch::Tensor y = torch::matmul(w, vh).transpose(1, 2).reshape({b, nq, e});
  return out(y);
}

FeedForwardImpl::FeedForwardImpl(int embed, int ratio) {
  fc1 = register_module("fc1", torch::nn::Linear(embed, embed * ratio));
  fc2 = register_module("fc2", torch::nn::Linear(embed * ratio, embed));
}

torch::Tensor FeedForwardImpl::forward(const torch::Tensor& x) { return fc2(torch::gelu(fc1(x))); }

TransformerLayerImpl::TransformerLayerImpl(int embed, int heads, int mlp_ratio) {
  norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({embed})));
  norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({embed})));
  attn = register_module("attn", MultiHeadAttention(embed, heads));
  mlp = register_module("mlp", FeedForward(embed, mlp_ratio));
}

torch::Tensor TransformerLayerImpl::forward(const torch::Tensor& x, AttentionProbe* probe) {
  torch::Tensor h = norm1(x);
  torch::Tensor y = x + attn(h, h, probe);
  return y + mlp(norm2(y));
}

JointEncoderImpl::JointEncoderImpl(int embed, int heads, int mlp_ratio, int n) {
  for (int i = 0; i < n; ++i) {
    layers.push_back(register_module("layer" + std::to_string(i), TransformerLayer(embed, heads, mlp_ratio)));
  }
}

TokenSequence JointEncoderImpl::forward(const TokenSequence& seq, AttentionProbe* probe) {
  TokenSequence out = seq;
  for (size_t i = 0; i < layers.size(); ++i) {
    torch::Tensor next = layers[i](out.tokens, probe);
    if (next.sizes() != out.tokens.sizes()) {
      throw ShapeError("self-attention layer " + std::to_string(i) + " changed the token shape");
    }
    out.tokens = next;
  }
  return out;
}

torch::Tensor grid_encoding(int g, int embed) {
  torch::Tensor code = torch::zeros({int64_t(g) * g, embed});
  const int half = embed / 2;
  const int pairs = half / 2;
  auto acc = code.accessor<float, 2>();
  for (int r = 0; r < g; ++r) {
    for (int c = 0; c < g; ++c) {
      const int n = r * g + c;
      for (int k = 0; k < pairs; ++k) {
        const double f = std::pow(10000.0, -double(k) / std::max(pairs, 1));
        acc[n][2 * k] = static_cast<float>(std::sin(r * f));
        acc[n][2 * k + 1] = static_cast<float>(std::cos(r * f));
        acc[n][half + 2 * k] = static_cast<float>(std::sin(c * f));
        acc[n][half + 2 * k + 1] = static_cast<float>(std::cos(c * f));
      }
    }
  }
  return code;
}

SpcaLayerImpl::SpcaLayerImpl(int embed, int heads, int mlp_ratio) {
  norm_q = register_module("norm_q", torch::nn::LayerNorm(torch::nn::LayerNormOptions({embed})));
  norm_m = register_module("norm_m", torch::nn::LayerNorm(torch::nn::LayerNormOptions({embed})));
  norm_f = register_module("norm_f", torch::nn::LayerNorm(torch::nn::LayerNormOptions({embed})));
  attn = register_module("attn", MultiHeadAttention(embed, heads));
  mlp = register_module("mlp", FeedForward(embed, mlp_ratio));
}

torch::Tensor SpcaLayerImpl::forward(const torch::Tensor& queries, const torch::Tensor& memory,
                                     AttentionProbe* probe) {
  torch::Tensor y = queries + attn(norm_q(queries), norm_m(memory), probe);
  return y + mlp(norm_f(y));
}

SpcaImpl::SpcaImpl(int embed, int heads, int mlp_ratio, int n, int n_scaq) {
  grid_ = static_cast<int>(std::lround(std::sqrt(double(n_scaq))));
  if (grid_ * grid_ != n_scaq) throw ConfigError("n_scaq must be a perfect square");
  scaq = register_parameter("scaq", trunc_normal({n_scaq, embed}, 0.02));
  grid_code = register_buffer("grid_code", grid_encoding(grid_, embed));
  for (int i = 0; i < n; ++i) {
    layers.push_back(register_module("layer" + std::to_string(i), SpcaLayer(embed, heads, mlp_ratio)));
  }
  norm_out = register_module("norm_out", torch::nn::LayerNorm(torch::nn::LayerNormOptions({embed})));
}

torch::Tensor SpcaImpl::forward(const torch::Tensor& memory, AttentionProbe* probe) {
  const int64_t b = memory.size(0), e = memory.size(2);
  torch::Tensor q = (scaq + grid_code).unsqueeze(0).expand({b, -1, -1});
  for (auto& layer : layers) q = layer(q, memory, probe);
  q = norm_out(q);
  return q.transpose(1, 2).reshape({b, e, grid_, grid_});
}

}  // namespace havt
