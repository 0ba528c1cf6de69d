#include "modseg/nets.hpp"

#include <nlohmann/json.hpp>

#include "modseg/error.hpp"

namespace modseg {

using nlohmann::json;

const char* net_kind_name(NetKind kind) {
  switch (kind) {
    case NetKind::Single: return "single";
    case NetKind::MultipathConcat: return "multipath_concat";
    case NetKind::MultipathSharedRep: return "multipath_sharedrep";
  }
  return "?";
}

NetKind net_kind_from_name(const std::string& name) {
  if (name == "single") return NetKind::Single;
  if (name == "multipath_concat") return NetKind::MultipathConcat;
  if (name == "multipath_sharedrep") return NetKind::MultipathSharedRep;
  fail("unknown network kind '", name, "'");
}

void NetworkConfig::validate() const {
  require(base_width >= 1, "base_width must be >= 1");
  require(depth >= 2, "depth must be >= 2");
  require(num_labels >= 2, "num_labels must be >= 2");
  require(num_modalities >= 1, "num_modalities must be >= 1");
  if (is_multipath()) require(pathway_width >= 1, "pathway_width must be >= 1");
  require(leaky_slope >= 0.0f && leaky_slope < 1.0f, "leaky_slope out of range");
}

std::string NetworkConfig::to_json_string() const {
  json j;
  j["kind"] = net_kind_name(kind);
  j["base_width"] = base_width;
  j["depth"] = depth;
  j["num_modalities"] = num_modalities;
  j["num_labels"] = num_labels;
  j["pathway_width"] = pathway_width;
  j["leaky_slope"] = leaky_slope;
  return j.dump(2);
}

NetworkConfig NetworkConfig::from_json_string(const std::string& text) {
  const json j = json::parse(text);
  NetworkConfig cfg;
  cfg.kind = net_kind_from_name(j.at("kind").get<std::string>());
  cfg.base_width = j.value("base_width", cfg.base_width);
  cfg.depth = j.value("depth", cfg.depth);
  cfg.num_modalities = j.value("num_modalities", cfg.num_modalities);
  cfg.num_labels = j.value("num_labels", cfg.num_labels);
  cfg.pathway_width = j.value("pathway_width", cfg.pathway_width);
  cfg.leaky_slope = j.value("leaky_slope", cfg.leaky_slope);
  cfg.validate();
  return cfg;
}

ConvBlock::ConvBlock(int in_channels, int out_channels, float slope)
    : bn(in_channels), conv(in_channels, out_channels, 3), act(slope) {}

void ConvBlock::init(Rng& rng) {
  bn.init();
  conv.init(rng);
}

Tensor ConvBlock::forward(const Tensor& x, Mode mode, bool cache) {
  Tensor h = bn.forward(x, mode, cache);
  h = conv.forward(h, cache);
  return act.forward(h, cache);
}

Tensor ConvBlock::backward(const Tensor& gy) {
  Tensor g = act.backward(gy);
  g = conv.backward(g);
  return bn.backward(g);
}

void ConvBlock::collect(const std::string& prefix, std::vector<Param*>& out) {
  bn.collect(prefix + ".bn", out);
  conv.collect(prefix + ".conv", out);
}

UNetBackbone::UNetBackbone(int in_channels, int width, int depth, float slope)
    : depth_(depth) {
  require(depth >= 2, "backbone depth must be >= 2");
  int in_c = in_channels;
  for (int level = 1; level < depth; ++level) {
    const int w = width << (level - 1);
    enc_.emplace_back(in_c, w, slope);
    in_c = w;
  }
  const int bottom_w = width << (depth - 1);
  bottom1_ = std::make_unique<ConvBlock>(in_c, bottom_w, slope);
  bottom2_ = std::make_unique<ConvBlock>(bottom_w, bottom_w, slope);
  // dec_[j] mirrors encoder level j+1 and runs late in the forward pass
  for (int level = 1; level < depth; ++level) {
    const int w = width << (level - 1);
    const int deeper_w = width << level;
    dec_.emplace_back(deeper_w + w, w, slope, deeper_w);
  }
}

void UNetBackbone::init(Rng& rng) {
  for (auto& level : enc_) {
    level.c1.init(rng);
    level.c2.init(rng);
  }
  bottom1_->init(rng);
  bottom2_->init(rng);
  for (auto& level : dec_) {
    level.c1.init(rng);
    level.c2.init(rng);
  }
}

void UNetBackbone::collect(const std::string& prefix, std::vector<Param*>& out) {
  for (size_t i = 0; i < enc_.size(); ++i) {
    enc_[i].c1.collect(prefix + ".enc" + std::to_string(i) + ".c1", out);
    enc_[i].c2.collect(prefix + ".enc" + std::to_string(i) + ".c2", out);
  }
  bottom1_->collect(prefix + ".bottom1", out);
  bottom2_->collect(prefix + ".bottom2", out);
  for (size_t i = 0; i < dec_.size(); ++i) {
    dec_[i].c1.collect(prefix + ".dec" + std::to_string(i) + ".c1", out);
    dec_[i].c2.collect(prefix + ".dec" + std::to_string(i) + ".c2", out);
  }
}

Tensor UNetBackbone::forward(const Tensor& x, Mode mode, bool cache) {
  // the arithmetic below mirrors output_size(); run it first so size errors
  // surface with the stage description rather than a kernel failure
  output_size(x.size(2), depth_);
  require(x.size(2) == x.size(3) && x.size(3) == x.size(4),
          "backbone expects cubic input, got ", x.shape_str());

  Tensor cur = x;
  for (auto& level : enc_) {
    Tensor a = level.c1.forward(cur, mode, cache);
    Tensor s = level.c2.forward(a, mode, cache);
    level.skip_shape = s.shape();
    level.skip = s;  // kept for the decoder concat and its backward
    cur = level.pool.forward(s, cache);
  }
  cur = bottom1_->forward(cur, mode, cache);
  cur = bottom2_->forward(cur, mode, cache);
  for (size_t j = dec_.size(); j-- > 0;) {
    auto& level = dec_[j];
    Tensor u = level.up.forward(cur);
    Tensor sc = center_crop(enc_[j].skip, u.size(2));
    cur = level.c1.forward(concat_channels(u, sc), mode, cache);
    cur = level.c2.forward(cur, mode, cache);
  }
  if (!cache)
    for (auto& level : enc_) level.skip = Tensor();
  return cur;
}

Tensor UNetBackbone::backward(const Tensor& gy) {
  std::vector<Tensor> gskip(enc_.size());
  Tensor g = gy;
  for (size_t j = 0; j < dec_.size(); ++j) {
    auto& level = dec_[j];
    g = level.c1.backward(level.c2.backward(g));
    Tensor gu, gsc;
    split_channels(g, level.concat_split, gu, gsc);
    gskip[j] = center_crop_backward(gsc, enc_[j].skip_shape);
    g = level.up.backward(gu);
  }
  g = bottom1_->backward(bottom2_->backward(g));
  for (size_t i = enc_.size(); i-- > 0;) {
    Tensor gs = enc_[i].pool.backward(g);
    accumulate(gs, gskip[i]);
    g = enc_[i].c1.backward(enc_[i].c2.backward(gs));
  }
  return g;
}

Param* Model::find_param(const std::string& name) {
  for (Param* p : params_)
    if (p->name == name) return p;
  return nullptr;
}

void Model::zero_grads() {
  for (Param* p : params_) {
    p->ensure_grad();
    p->grad.zero();
  }
}

SingleUNet::SingleUNet(const NetworkConfig& cfg)
    : Model(cfg),
      body(cfg.num_modalities, cfg.base_width, cfg.depth, cfg.leaky_slope),
      head_hidden(cfg.base_width, 2 * cfg.base_width, 1),
      head_act(cfg.leaky_slope),
      head_logit(2 * cfg.base_width, cfg.num_labels, 1) {
  cfg_.validate();
  require(cfg.kind == NetKind::Single, "SingleUNet requires kind=single");
  body.collect("body", params_);
  head_hidden.collect("head_hidden", params_);
  head_logit.collect("head_logit", params_);
}

void SingleUNet::init(Rng& rng) {
  body.init(rng);
  head_hidden.init(rng);
  head_logit.init(rng);
}

Tensor SingleUNet::forward(const Tensor& x, const ModalityMask& mask, Mode mode) {
  require(x.rank() == 5 && x.size(1) == cfg_.num_modalities, "input ", x.shape_str(),
          " does not match network arity ", cfg_.num_modalities);
  require(mask.m_total() == cfg_.num_modalities, "mask arity ", mask.m_total(),
          " does not match network arity ", cfg_.num_modalities);
  const bool cache = mode == Mode::Train;
  Tensor masked = x;
  apply_mask_batch(masked, mask);
  Tensor h = body.forward(masked, mode, cache);
  h = head_hidden.forward(h, cache);
  h = head_act.forward(h, cache);
  last_hidden_ = h;
  return head_logit.forward(h, cache);
}

void SingleUNet::backward(const Tensor& grad_logits) {
  Tensor g = head_logit.backward(grad_logits);
  g = head_act.backward(g);
  g = head_hidden.backward(g);
  body.backward(g);
}

MultipathNet::MultipathNet(const NetworkConfig& cfg)
    : Model(cfg),
      head_hidden(cfg.fused_width(), 4 * cfg.pathway_width, 1),
      head_act(cfg.leaky_slope),
      head_logit(4 * cfg.pathway_width, cfg.num_labels, 1) {
  cfg_.validate();
  require(cfg.is_multipath(), "MultipathNet requires a multipath kind");
  const int head_out = cfg.pathway_head_width_factor() * cfg.pathway_width;
  for (int i = 0; i < cfg.num_modalities; ++i)
    paths.emplace_back(cfg.pathway_width, head_out, cfg.depth, cfg.leaky_slope);
  for (size_t i = 0; i < paths.size(); ++i) {
    const std::string prefix = "path" + std::to_string(i);
    paths[i].body.collect(prefix + ".body", params_);
    paths[i].head.collect(prefix + ".head", params_);
  }
  head_hidden.collect("head_hidden", params_);
  head_logit.collect("head_logit", params_);
}

void MultipathNet::init(Rng& rng) {
  for (auto& p : paths) {
    p.body.init(rng);
    p.head.init(rng);
  }
  head_hidden.init(rng);
  head_logit.init(rng);
}

Tensor MultipathNet::forward(const Tensor& x, const ModalityMask& mask, Mode mode) {
  require(x.rank() == 5 && x.size(1) == cfg_.num_modalities, "input ", x.shape_str(),
          " does not match network arity ", cfg_.num_modalities);
  require(mask.m_total() == cfg_.num_modalities, "mask arity ", mask.m_total(),
          " does not match network arity ", cfg_.num_modalities);
  require(!mask.empty(), "multipath forward with empty mask");
  last_mask_ = mask;
  const bool cache = mode == Mode::Train;
  const int64_t N = x.size(0), S = x.size(2);
  const int64_t V = S * S * S;

  std::vector<Tensor> head_out(paths.size());
  std::vector<const Tensor*> fusion_in(paths.size(), nullptr);
  for (size_t i = 0; i < paths.size(); ++i) {
    if (!mask.is_present(static_cast<int>(i))) continue;
    Tensor xi({N, 1, S, S, S});
    for (int64_t n = 0; n < N; ++n)
      std::copy(x.data() + (n * cfg_.num_modalities + static_cast<int64_t>(i)) * V,
                x.data() + (n * cfg_.num_modalities + static_cast<int64_t>(i) + 1) * V,
                xi.data() + n * V);
    auto& path = paths[i];
    const Mode body_mode = path.frozen ? Mode::Eval : mode;
    const bool body_cache = cache && !path.frozen;
    Tensor h = path.body.forward(xi, body_mode, body_cache);
    h = path.head.forward(h, cache && path.head.weight.trainable);
    head_out[i] = path.act.forward(h, cache && path.head.weight.trainable);
    fusion_in[i] = &head_out[i];
  }

  Tensor fused;
  if (cfg_.kind == NetKind::MultipathConcat)
    fused = fuse_concat_layer.forward(fusion_in, cache);
  else
    fused = fuse_meanvar_layer.forward(fusion_in, cache);

  Tensor h = head_hidden.forward(fused, cache);
  h = head_act.forward(h, cache);
  last_hidden_ = h;
  return head_logit.forward(h, cache);
}

void MultipathNet::backward(const Tensor& grad_logits) {
  Tensor g = head_logit.backward(grad_logits);
  g = head_act.backward(g);
  g = head_hidden.backward(g);
  std::vector<Tensor> gpaths = cfg_.kind == NetKind::MultipathConcat
                                   ? fuse_concat_layer.backward(g)
                                   : fuse_meanvar_layer.backward(g);
  for (size_t i = 0; i < paths.size(); ++i) {
    if (!last_mask_.is_present(static_cast<int>(i)) || gpaths[i].empty()) continue;
    auto& path = paths[i];
    if (path.frozen && !path.head.weight.trainable) continue;  // nothing to learn below fusion
    Tensor gh = path.act.backward(gpaths[i]);
    gh = path.head.backward(gh);
    if (!path.frozen) path.body.backward(gh);
  }
}

void MultipathNet::load_pathway_from(int index, Model& single_unet) {
  auto* unet = dynamic_cast<SingleUNet*>(&single_unet);
  require(unet != nullptr, "pathway source must be a single UNet");
  require(unet->config().num_modalities == 1, "pathway source must be single-modality, has ",
          unet->config().num_modalities);
  require(unet->config().base_width == cfg_.pathway_width, "pathway width ",
          cfg_.pathway_width, " does not match source width ", unet->config().base_width);
  require(unet->config().depth == cfg_.depth, "pathway depth mismatch");
  const std::string prefix = "path" + std::to_string(index);
  for (Param* src : unet->params()) {
    std::string target_name;
    if (src->name.rfind("body.", 0) == 0)
      target_name = prefix + "." + src->name;
    else if (src->name.rfind("head_hidden.", 0) == 0) {
      if (cfg_.kind != NetKind::MultipathConcat) continue;  // shared-rep heads are replaced
      target_name = prefix + ".head." + src->name.substr(std::string("head_hidden.").size());
    } else {
      continue;  // prediction layer of the source network is dropped
    }
    Param* dst = find_param(target_name);
    require(dst != nullptr, "no pathway parameter ", target_name);
    require(dst->value.same_shape(src->value), "pathway parameter ", target_name,
            " shape mismatch: ", dst->value.shape_str(), " vs ", src->value.shape_str());
    dst->value = src->value;
  }
}

void MultipathNet::freeze_pathways(bool freeze_heads) {
  for (size_t i = 0; i < paths.size(); ++i) {
    paths[i].frozen = true;
    const std::string prefix = "path" + std::to_string(i) + ".";
    const std::string head_prefix = prefix + "head.";
    for (Param* p : params_) {
      if (p->name.rfind(prefix, 0) != 0) continue;
      const bool is_head = p->name.rfind(head_prefix, 0) == 0;
      if (is_head && !freeze_heads) continue;
      p->trainable = false;
    }
  }
}

void MultipathNet::reinit_pathway_heads(Rng& rng) {
  for (auto& path : paths) path.head.init(rng);
}

std::unique_ptr<Model> build_model(const NetworkConfig& cfg, uint64_t seed) {
  cfg.validate();
  std::unique_ptr<Model> model;
  if (cfg.kind == NetKind::Single)
    model = std::make_unique<SingleUNet>(cfg);
  else
    model = std::make_unique<MultipathNet>(cfg);
  Rng rng(seed);
  model->init(rng);
  return model;
}

int64_t param_count(Model& model) {
  int64_t n = 0;
  for (const Param* p : model.params())
    if (p->trainable && !p->buffer) n += p->value.numel();
  return n;
}

}  // namespace modseg
