#pragma once

#include <memory>
#include <string>
#include <vector>

#include "modseg/fusion.hpp"
#include "modseg/geometry.hpp"
#include "modseg/layers.hpp"
#include "modseg/missingness.hpp"

namespace modseg {

enum class NetKind { Single, MultipathConcat, MultipathSharedRep };

const char* net_kind_name(NetKind kind);
NetKind net_kind_from_name(const std::string& name);

struct NetworkConfig {
  NetKind kind = NetKind::Single;
  int base_width = 32;    // c: kernels of the first convolution (single network)
  int depth = 4;          // resolution levels
  int num_modalities = 4; // M: input channels (single) / pathways (multipath)
  int num_labels = 4;     // L
  int pathway_width = 16; // c of each pathway in multipath kinds
  float leaky_slope = 0.01f;

  // 2 for concat pathways, 4 for shared-representation pathways
  int pathway_head_width_factor() const {
    return kind == NetKind::MultipathSharedRep ? 4 : 2;
  }
  int fused_width() const {
    return kind == NetKind::MultipathSharedRep
               ? 8 * pathway_width
               : num_modalities * 2 * pathway_width;
  }
  bool is_multipath() const { return kind != NetKind::Single; }

  void validate() const;
  std::string to_json_string() const;
  static NetworkConfig from_json_string(const std::string& text);
};

// batch-normalization -> unpadded 3^3 convolution -> leaky ReLU
class ConvBlock {
 public:
  ConvBlock(int in_channels, int out_channels, float slope);

  void init(Rng& rng);
  Tensor forward(const Tensor& x, Mode mode, bool cache);
  Tensor backward(const Tensor& gy);
  void collect(const std::string& prefix, std::vector<Param*>& out);

  BatchNorm3d bn;
  Conv3d conv;
  LeakyReLU act;
};

// Valid-convolution UNet encoder/decoder; output keeps base width at the
// target resolution. Widths per level are c, 2c, ... with 2^(depth-1)c at
// the bottom, mirrored in the decoder.
class UNetBackbone {
 public:
  UNetBackbone(int in_channels, int width, int depth, float slope);

  void init(Rng& rng);
  Tensor forward(const Tensor& x, Mode mode, bool cache);
  Tensor backward(const Tensor& gy);
  void collect(const std::string& prefix, std::vector<Param*>& out);

  int depth() const { return depth_; }

 private:
  struct EncoderLevel {
    ConvBlock c1, c2;
    MaxPool3d pool;
    Tensor skip;  // cached activation feeding the skip connection
    std::vector<int64_t> skip_shape;
    EncoderLevel(int in_c, int out_c, float slope) : c1(in_c, out_c, slope), c2(out_c, out_c, slope) {}
  };
  struct DecoderLevel {
    Upsample2x up;
    ConvBlock c1, c2;
    int64_t concat_split;  // channels coming from the deeper level
    DecoderLevel(int in_c, int out_c, float slope, int64_t split)
        : c1(in_c, out_c, slope), c2(out_c, out_c, slope), concat_split(split) {}
  };

  int depth_;
  std::vector<EncoderLevel> enc_;
  std::unique_ptr<ConvBlock> bottom1_, bottom2_;
  std::vector<DecoderLevel> dec_;
};

class Model {
 public:
  explicit Model(const NetworkConfig& cfg) : cfg_(cfg) {}
  virtual ~Model() = default;

  const NetworkConfig& config() const { return cfg_; }

  // x: [N, M, s, s, s]; returns logits [N, L, t, t, t]. The mask is applied
  // at the model's masking point (input channels for the single network,
  // fusion layer for multipath kinds).
  virtual Tensor forward(const Tensor& x, const ModalityMask& mask, Mode mode) = 0;
  virtual void backward(const Tensor& grad_logits) = 0;
  virtual void init(Rng& rng) = 0;

  virtual int hidden_width() const = 0;
  virtual int input_arity() const = 0;

  const std::vector<Param*>& params() { return params_; }
  Param* find_param(const std::string& name);
  void zero_grads();

  // activations of the final hidden 1^3 layer from the last forward pass
  const Tensor& hidden_activations() const { return last_hidden_; }

 protected:
  NetworkConfig cfg_;
  std::vector<Param*> params_;
  Tensor last_hidden_;
};

class SingleUNet final : public Model {
 public:
  explicit SingleUNet(const NetworkConfig& cfg);

  void init(Rng& rng) override;
  Tensor forward(const Tensor& x, const ModalityMask& mask, Mode mode) override;
  void backward(const Tensor& grad_logits) override;
  int hidden_width() const override { return 2 * cfg_.base_width; }
  int input_arity() const override { return cfg_.num_modalities; }

  UNetBackbone body;
  Conv3d head_hidden;  // 1^3, c -> 2c
  LeakyReLU head_act;
  Conv3d head_logit;  // 1^3, 2c -> L
};

class MultipathNet final : public Model {
 public:
  explicit MultipathNet(const NetworkConfig& cfg);

  void init(Rng& rng) override;
  Tensor forward(const Tensor& x, const ModalityMask& mask, Mode mode) override;
  void backward(const Tensor& grad_logits) override;
  int hidden_width() const override { return 4 * cfg_.pathway_width; }
  int input_arity() const override { return cfg_.num_modalities; }

  // Copies backbone (and for concat fusion the hidden-head) weights from a
  // pretrained single-modality UNet into pathway `index`.
  void load_pathway_from(int index, Model& single_unet);
  // Marks pathway parameters frozen; frozen backbones run in Eval mode.
  void freeze_pathways(bool freeze_heads);
  void reinit_pathway_heads(Rng& rng);

  struct Pathway {
    UNetBackbone body;
    Conv3d head;  // 1^3, c_p -> 2c_p (concat) or 4c_p (shared representation)
    LeakyReLU act;
    bool frozen = false;
    Pathway(int width, int head_out, int depth, float slope)
        : body(1, width, depth, slope), head(width, head_out, 1), act(slope) {}
  };

  std::vector<Pathway> paths;
  FuseConcatLayer fuse_concat_layer;
  FuseMeanVarLayer fuse_meanvar_layer;
  Conv3d head_hidden;  // 1^3, fused -> 4c_p
  LeakyReLU head_act;
  Conv3d head_logit;  // 1^3, 4c_p -> L

 private:
  ModalityMask last_mask_;
};

// Builds (and seeds) the network described by the config.
std::unique_ptr<Model> build_model(const NetworkConfig& cfg, uint64_t seed);

// Total trainable scalar parameters (batch-norm buffers excluded).
int64_t param_count(Model& model);

}  // namespace modseg
