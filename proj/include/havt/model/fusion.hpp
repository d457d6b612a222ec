#pragma once

#include <array>
#include <vector>

#include <torch/torch.h>

namespace havt {

enum class Modality : uint8_t { kVisual, kAudio };

struct TokenSequence {
  torch::Tensor tokens;  // [B, N, E], visual tokens first
  int64_t n_visual = 0, n_audio = 0;
  std::vector<Modality> tags;
  std::vector<std::array<int, 2>> positions;  // (row, col) within its own grid
  int64_t size() const { return n_visual + n_audio; }
};

// Collects per-layer attention weights [B, heads, Nq, Nk] when passed in.
using AttentionProbe = std::vector<torch::Tensor>;

class PatchifyImpl : public torch::nn::Module {
 public:
  PatchifyImpl(int visual_channels, std::array<int, 2> visual_grid, int audio_channels,
               std::array<int, 2> audio_grid, int embed);
  // vmap [B, Cv, gv, gv], amap [B, Ca, rows, cols]; one token per cell,
  // row-major.
  TokenSequence forward(const torch::Tensor& vmap, const torch::Tensor& amap);

  torch::nn::Linear visual_proj{nullptr}, audio_proj{nullptr};
  torch::Tensor visual_pos, audio_pos, modality;  // [Nv,E], [Na,E], [2,E]

 private:
  std::array<int, 2> vgrid_, agrid_;
};
TORCH_MODULE(Patchify);

class MultiHeadAttentionImpl : public torch::nn::Module {
 public:
  MultiHeadAttentionImpl(int embed, int heads);
  // query [B, Nq, E], memory [B, Nk, E] -> [B, Nq, E]
  torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& memory,
                        AttentionProbe* probe = nullptr);
  // Replace the softmax weights with the identity (Nq == Nk only).
  bool force_identity = false;

  torch::nn::Linear q{nullptr}, k{nullptr}, v{nullptr}, out{nullptr};

 private:
  int heads_;
};
TORCH_MODULE(MultiHeadAttention);

class FeedForwardImpl : public torch::nn::Module {
 public:
  FeedForwardImpl(int embed, int ratio);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(FeedForward);

// Pre-norm self-attention block.
class TransformerLayerImpl : public torch::nn::Module {
 public:
  TransformerLayerImpl(int embed, int heads, int mlp_ratio);
  torch::Tensor forward(const torch::Tensor& x, AttentionProbe* probe = nullptr);

  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
  MultiHeadAttention attn{nullptr};
  FeedForward mlp{nullptr};
};
TORCH_MODULE(TransformerLayer);

class JointEncoderImpl : public torch::nn::Module {
 public:
  JointEncoderImpl(int embed, int heads, int mlp_ratio, int layers);
  TokenSequence forward(const TokenSequence& seq, AttentionProbe* probe = nullptr);
  std::vector<TransformerLayer> layers;
};
TORCH_MODULE(JointEncoder);

// Fixed 2-D sinusoidal code for a g x g grid, [g*g, E], row-major.
torch::Tensor grid_encoding(int g, int embed);

class SpcaLayerImpl : public torch::nn::Module {
 public:
  SpcaLayerImpl(int embed, int heads, int mlp_ratio);
  torch::Tensor forward(const torch::Tensor& queries, const torch::Tensor& memory,
                        AttentionProbe* probe = nullptr);

  torch::nn::LayerNorm norm_q{nullptr}, norm_m{nullptr}, norm_f{nullptr};
  MultiHeadAttention attn{nullptr};
  FeedForward mlp{nullptr};
};
TORCH_MODULE(SpcaLayer);

// SCAQ slots pulling evidence from the joint memory into a g x g map.
class SpcaImpl : public torch::nn::Module {
 public:
  SpcaImpl(int embed, int heads, int mlp_ratio, int layers, int n_scaq);
  // memory [B, N, E] -> AVCE [B, E, g, g]
  torch::Tensor forward(const torch::Tensor& memory, AttentionProbe* probe = nullptr);
  int grid() const { return grid_; }

  torch::Tensor scaq;       // learned [N_scaq, E]
  torch::Tensor grid_code;  // buffer [N_scaq, E]
  std::vector<SpcaLayer> layers;
  torch::nn::LayerNorm norm_out{nullptr};

 private:
  int grid_;
};
TORCH_MODULE(Spca);

}  // namespace havt
