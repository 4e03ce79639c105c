#include "weedid/nnkit/vit.hpp"

#include <cmath>

#include "weedid/core/random.hpp"
#include "weedid/error.hpp"
#include "weedid/nnkit/ops.hpp"

namespace weedid::nn {

namespace detail {

struct LayerNormCache {
  Matrix xhat;
  Eigen::VectorXd rstd;
};

struct BlockCache {
  Matrix input;
  LayerNormCache ln1;
  Matrix attn_in;
  Matrix qkv;
  std::vector<Matrix> probs;
  Matrix context;
  LayerNormCache ln2;
  Matrix mlp_in;
  Matrix fc1_pre;
  Matrix fc1_act;
  double keep_attn = 1.0;
  double keep_mlp = 1.0;
};

struct ImageCache {
  Matrix patches;            // P x patch_dim
  std::vector<int> visible;  // patch indices seen by the encoder, ascending
  std::vector<BlockCache> encoder;
  LayerNormCache enc_norm;
  Matrix encoded;  // tokens x D, after the final norm
  RowVector pooled;

  std::vector<char> masked;  // MAE only
  std::vector<BlockCache> decoder;
  LayerNormCache dec_norm;
  Matrix dec_normed;
  Matrix pred;    // P x patch_dim
  Matrix target;  // P x patch_dim
};

enum class CacheKind { Classify, Mae };

struct CacheData {
  CacheKind kind = CacheKind::Classify;
  std::uint64_t revision = 0;
  ArchConfig arch;
  std::vector<ImageCache> images;
  Matrix logits;
};

}  // namespace detail

using detail::BlockCache;
using detail::ImageCache;
using detail::LayerNormCache;

std::size_t ForwardCache::batch_size() const { return data_ ? data_->images.size() : 0; }

const Matrix& ForwardCache::attention(std::size_t image, std::size_t block, std::size_t head) const {
  return data_->images.at(image).encoder.at(block).probs.at(head);
}

namespace {

constexpr double kLayerNormEps = 1e-6;

struct BlockParams {
  ConstMatrixMap n1w, n1b, qkvw, qkvb, projw, projb, n2w, n2b, fc1w, fc1b, fc2w, fc2b;

  BlockParams(const ParameterSet& p, const std::string& pre)
      : n1w(p.matrix(pre + "norm1.weight")),
        n1b(p.matrix(pre + "norm1.bias")),
        qkvw(p.matrix(pre + "attn.qkv.weight")),
        qkvb(p.matrix(pre + "attn.qkv.bias")),
        projw(p.matrix(pre + "attn.proj.weight")),
        projb(p.matrix(pre + "attn.proj.bias")),
        n2w(p.matrix(pre + "norm2.weight")),
        n2b(p.matrix(pre + "norm2.bias")),
        fc1w(p.matrix(pre + "mlp.fc1.weight")),
        fc1b(p.matrix(pre + "mlp.fc1.bias")),
        fc2w(p.matrix(pre + "mlp.fc2.weight")),
        fc2b(p.matrix(pre + "mlp.fc2.bias")) {}
};

struct BlockGrads {
  MatrixMap n1w, n1b, qkvw, qkvb, projw, projb, n2w, n2b, fc1w, fc1b, fc2w, fc2b;

  BlockGrads(ParameterSet& g, const std::string& pre)
      : n1w(g.matrix(pre + "norm1.weight")),
        n1b(g.matrix(pre + "norm1.bias")),
        qkvw(g.matrix(pre + "attn.qkv.weight")),
        qkvb(g.matrix(pre + "attn.qkv.bias")),
        projw(g.matrix(pre + "attn.proj.weight")),
        projb(g.matrix(pre + "attn.proj.bias")),
        n2w(g.matrix(pre + "norm2.weight")),
        n2b(g.matrix(pre + "norm2.bias")),
        fc1w(g.matrix(pre + "mlp.fc1.weight")),
        fc1b(g.matrix(pre + "mlp.fc1.bias")),
        fc2w(g.matrix(pre + "mlp.fc2.weight")),
        fc2b(g.matrix(pre + "mlp.fc2.bias")) {}
};

std::vector<BlockParams> block_params(const ParameterSet& p, const std::string& stem, int count) {
  std::vector<BlockParams> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int b = 0; b < count; ++b) out.emplace_back(p, stem + std::to_string(b) + ".");
  return out;
}

std::vector<BlockGrads> block_grads(ParameterSet& g, const std::string& stem, int count) {
  std::vector<BlockGrads> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int b = 0; b < count; ++b) out.emplace_back(g, stem + std::to_string(b) + ".");
  return out;
}

Matrix linear(const Matrix& x, const ConstMatrixMap& w, const ConstMatrixMap& b) {
  Matrix out = x * w;
  out.rowwise() += b.row(0);
  return out;
}

// Accumulates weight/bias gradients and returns the input gradient.
Matrix linear_backward(const Matrix& dout, const Matrix& x, const ConstMatrixMap& w, MatrixMap dw, MatrixMap db) {
  dw.noalias() += x.transpose() * dout;
  db.row(0) += dout.colwise().sum();
  return dout * w.transpose();
}

Matrix layer_norm(const Matrix& x, const ConstMatrixMap& w, const ConstMatrixMap& b, LayerNormCache& cache) {
  const auto n = x.cols();
  cache.xhat.resize(x.rows(), n);
  cache.rstd.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.rstd(r) = rstd;
    cache.xhat.row(r) = (x.row(r).array() - mean) * rstd;
  }
  Matrix y = cache.xhat.array().rowwise() * w.row(0).array();
  y.rowwise() += b.row(0);
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const LayerNormCache& cache, const ConstMatrixMap& w, MatrixMap dw,
                           MatrixMap db) {
  dw.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  db.row(0) += dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * w.row(0).array();
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_d = dxhat.row(r).mean();
    const double mean_dx = dxhat.row(r).dot(cache.xhat.row(r)) / static_cast<double>(dy.cols());
    dx.row(r) = cache.rstd(r) * (dxhat.row(r).array() - mean_d - cache.xhat.row(r).array() * mean_dx);
  }
  return dx;
}

void softmax_rows_inplace(Matrix& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double m = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - m).exp();
    s.row(r) /= s.row(r).sum();
  }
}

Matrix block_forward(const Matrix& x, const BlockParams& p, int heads, BlockCache& c) {
  const auto T = x.rows();
  const auto D = x.cols();
  const auto dh = D / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  c.input = x;
  c.attn_in = layer_norm(x, p.n1w, p.n1b, c.ln1);
  c.qkv = linear(c.attn_in, p.qkvw, p.qkvb);
  c.probs.assign(static_cast<std::size_t>(heads), Matrix());
  c.context.resize(T, D);
  for (int h = 0; h < heads; ++h) {
    const auto q = c.qkv.middleCols(h * dh, dh);
    const auto k = c.qkv.middleCols(D + h * dh, dh);
    const auto v = c.qkv.middleCols(2 * D + h * dh, dh);
    Matrix s = (q * k.transpose()) * scale;
    softmax_rows_inplace(s);
    c.context.middleCols(h * dh, dh).noalias() = s * v;
    c.probs[static_cast<std::size_t>(h)] = std::move(s);
  }
  Matrix out = x + c.keep_attn * linear(c.context, p.projw, p.projb);
  c.mlp_in = layer_norm(out, p.n2w, p.n2b, c.ln2);
  c.fc1_pre = linear(c.mlp_in, p.fc1w, p.fc1b);
  c.fc1_act = c.fc1_pre.unaryExpr([](double v) { return gelu(v); });
  out += c.keep_mlp * linear(c.fc1_act, p.fc2w, p.fc2b);
  return out;
}

Matrix block_backward(const Matrix& dout, const BlockParams& p, BlockGrads& g, int heads, const BlockCache& c) {
  const auto T = dout.rows();
  const auto D = dout.cols();
  const auto dh = D / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // MLP branch
  const Matrix d_mlp_out = c.keep_mlp * dout;
  Matrix d_act = linear_backward(d_mlp_out, c.fc1_act, p.fc2w, g.fc2w, g.fc2b);
  const Matrix d_pre = d_act.array() * c.fc1_pre.unaryExpr([](double v) { return gelu_derivative(v); }).array();
  const Matrix d_mlp_in = linear_backward(d_pre, c.mlp_in, p.fc1w, g.fc1w, g.fc1b);
  Matrix dh1 = dout + layer_norm_backward(d_mlp_in, c.ln2, p.n2w, g.n2w, g.n2b);

  // Attention branch
  const Matrix d_attn_out = c.keep_attn * dh1;
  const Matrix d_context = linear_backward(d_attn_out, c.context, p.projw, g.projw, g.projb);
  Matrix d_qkv(T, 3 * D);
  for (int h = 0; h < heads; ++h) {
    const auto& a = c.probs[static_cast<std::size_t>(h)];
    const auto q = c.qkv.middleCols(h * dh, dh);
    const auto k = c.qkv.middleCols(D + h * dh, dh);
    const auto v = c.qkv.middleCols(2 * D + h * dh, dh);
    const auto dctx = d_context.middleCols(h * dh, dh);
    const Matrix da = dctx * v.transpose();
    d_qkv.middleCols(2 * D + h * dh, dh).noalias() = a.transpose() * dctx;
    const Eigen::VectorXd row_dot = (da.array() * a.array()).rowwise().sum();
    const Matrix ds = (a.array() * (da.colwise() - row_dot).array()) * scale;
    d_qkv.middleCols(h * dh, dh).noalias() = ds * k;
    d_qkv.middleCols(D + h * dh, dh).noalias() = ds.transpose() * q;
  }
  const Matrix d_attn_in = linear_backward(d_qkv, c.attn_in, p.qkvw, g.qkvw, g.qkvb);
  return dh1 + layer_norm_backward(d_attn_in, c.ln1, p.n1w, g.n1w, g.n1b);
}

void check_raster(const ArchConfig& arch, const Raster& r) {
  if (r.height != arch.image_size || r.width != arch.image_size || r.channels != arch.channels ||
      r.pixels.size() != static_cast<std::size_t>(r.height) * r.width * r.channels)
    throw Error(ErrorCode::ShapeMismatch, "raster " + std::to_string(r.height) + "x" + std::to_string(r.width) + "x" +
                                              std::to_string(r.channels) + " does not match model input " +
                                              std::to_string(arch.image_size) + "x" + std::to_string(arch.image_size) +
                                              "x" + std::to_string(arch.channels));
}

// Stochastic-depth keep factors for one image; rates rise linearly with depth.
void assign_drop_path(const ArchConfig& arch, const ForwardOptions& opt, std::size_t image,
                      std::vector<BlockCache>& blocks) {
  const double max_rate = opt.drop_path.value_or(arch.drop_path);
  if (!opt.training || max_rate <= 0.0) return;
  if (max_rate >= 1.0) throw Error(ErrorCode::ConfigError, "drop_path must lie in [0,1)");
  Rng rng = make_rng(opt.seed, 0xD0D0 + image);
  const auto n = blocks.size();
  for (std::size_t b = 0; b < n; ++b) {
    const double rate = n > 1 ? max_rate * static_cast<double>(b) / static_cast<double>(n - 1) : max_rate;
    if (rate <= 0.0) continue;
    blocks[b].keep_attn = uniform01(rng) < rate ? 0.0 : 1.0 / (1.0 - rate);
    blocks[b].keep_mlp = uniform01(rng) < rate ? 0.0 : 1.0 / (1.0 - rate);
  }
}

void encode_image(const ModelCheckpoint& ckpt, const std::vector<BlockParams>& blocks, ImageCache& ic,
                  const ForwardOptions& opt, std::size_t image_index) {
  const auto& arch = ckpt.arch();
  const auto& p = ckpt.params();
  const auto nv = static_cast<Eigen::Index>(ic.visible.size());
  const auto D = arch.embed_dim;

  const auto pos = p.matrix("pos_embed");
  Matrix vis_patches(nv, arch.patch_dim());
  for (Eigen::Index j = 0; j < nv; ++j) vis_patches.row(j) = ic.patches.row(ic.visible[static_cast<std::size_t>(j)]);

  Matrix tokens(nv + 1, D);
  tokens.row(0) = p.matrix("cls_token").row(0) + pos.row(0);
  tokens.bottomRows(nv) = linear(vis_patches, p.matrix("patch_embed.weight"), p.matrix("patch_embed.bias"));
  for (Eigen::Index j = 0; j < nv; ++j) tokens.row(j + 1) += pos.row(1 + ic.visible[static_cast<std::size_t>(j)]);

  ic.encoder.assign(blocks.size(), BlockCache{});
  assign_drop_path(arch, opt, image_index, ic.encoder);
  for (std::size_t b = 0; b < blocks.size(); ++b) tokens = block_forward(tokens, blocks[b], arch.heads, ic.encoder[b]);
  ic.encoded = layer_norm(tokens, p.matrix("norm.weight"), p.matrix("norm.bias"), ic.enc_norm);
  if (arch.pooling == Pooling::Mean) ic.pooled = ic.encoded.bottomRows(nv).colwise().mean();
  else ic.pooled = ic.encoded.row(0);
}

// Returns the gradient w.r.t. the encoder output (after final norm) folded back
// to the embedding parameters.
void encoder_backward(const ModelCheckpoint& ckpt, const std::vector<BlockParams>& blocks, GradientSet& g,
                      const ImageCache& ic, Matrix d_encoded) {
  const auto& arch = ckpt.arch();
  const auto& p = ckpt.params();
  const auto nv = static_cast<Eigen::Index>(ic.visible.size());

  Matrix d = layer_norm_backward(d_encoded, ic.enc_norm, p.matrix("norm.weight"), g.matrix("norm.weight"),
                                 g.matrix("norm.bias"));
  auto grads = block_grads(g, "blocks.", arch.depth);
  for (int b = arch.depth - 1; b >= 0; --b) {
    const auto bi = static_cast<std::size_t>(b);
    d = block_backward(d, blocks[bi], grads[bi], arch.heads, ic.encoder[bi]);
  }
  auto dpos = g.matrix("pos_embed");
  g.matrix("cls_token").row(0) += d.row(0);
  dpos.row(0) += d.row(0);
  Matrix vis_patches(nv, arch.patch_dim());
  for (Eigen::Index j = 0; j < nv; ++j) {
    const auto idx = ic.visible[static_cast<std::size_t>(j)];
    vis_patches.row(j) = ic.patches.row(idx);
    dpos.row(1 + idx) += d.row(j + 1);
  }
  const Matrix d_emb = d.bottomRows(nv);
  g.matrix("patch_embed.weight").noalias() += vis_patches.transpose() * d_emb;
  g.matrix("patch_embed.bias").row(0) += d_emb.colwise().sum();
}

void require_decoder(const ModelCheckpoint& ckpt) {
  if (!ckpt.params().contains("decoder_pred.weight") || !ckpt.params().contains("mask_token"))
    throw Error(ErrorCode::ShapeMismatch, "checkpoint has no MAE decoder (stage " + to_string(ckpt.stage()) + ")");
}

}  // namespace

Matrix patchify(const Raster& image, int patch_size) {
  const int gh = image.height / patch_size;
  const int gw = image.width / patch_size;
  Matrix out(gh * gw, patch_size * patch_size * image.channels);
  for (int r = 0; r < gh; ++r)
    for (int c = 0; c < gw; ++c) {
      Eigen::Index col = 0;
      for (int dy = 0; dy < patch_size; ++dy)
        for (int dx = 0; dx < patch_size; ++dx)
          for (int ch = 0; ch < image.channels; ++ch)
            out(r * gw + c, col++) = image.at(r * patch_size + dy, c * patch_size + dx, ch);
    }
  return out;
}

ForwardResult forward_vit(const ModelCheckpoint& ckpt, std::span<const Raster> batch, const ForwardOptions& options) {
  const auto& arch = ckpt.arch();
  for (const auto& r : batch) check_raster(arch, r);
  auto data = std::make_shared<detail::CacheData>();
  data->kind = detail::CacheKind::Classify;
  data->revision = ckpt.revision();
  data->arch = arch;
  data->images.resize(batch.size());

  const auto blocks = block_params(ckpt.params(), "blocks.", arch.depth);
  const auto B = static_cast<Eigen::Index>(batch.size());
  ForwardResult result;
  result.embeddings.resize(B, arch.embed_dim);
  result.logits.resize(B, arch.num_classes);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto& ic = data->images[i];
    ic.patches = patchify(batch[i], arch.patch_size);
    ic.visible.resize(static_cast<std::size_t>(arch.num_patches()));
    for (int k = 0; k < arch.num_patches(); ++k) ic.visible[static_cast<std::size_t>(k)] = k;
    encode_image(ckpt, blocks, ic, options, i);
    result.embeddings.row(static_cast<Eigen::Index>(i)) = ic.pooled;
  }
  if (ckpt.has_head()) {
    result.logits = linear(result.embeddings, ckpt.params().matrix("head.weight"), ckpt.params().matrix("head.bias"));
  }
  data->logits = result.logits;
  result.cache = ForwardCache(std::move(data));
  return result;
}

std::vector<std::vector<bool>> sample_mae_mask(const ArchConfig& arch, std::size_t batch, std::uint64_t seed) {
  const auto P = static_cast<std::size_t>(arch.num_patches());
  const auto n_masked = static_cast<std::size_t>(arch.masked_count());
  std::vector<std::vector<bool>> mask(batch, std::vector<bool>(P, false));
  for (std::size_t i = 0; i < batch; ++i) {
    Rng rng = make_rng(seed, i);
    const auto order = permutation(rng, P);
    for (std::size_t k = 0; k < n_masked; ++k) mask[i][order[k]] = true;
  }
  return mask;
}

double masked_mse(const Matrix& predictions, const Matrix& targets, const std::vector<std::vector<bool>>& mask) {
  if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols())
    throw Error(ErrorCode::ShapeMismatch, "prediction/target shapes differ");
  double sum = 0.0;
  std::size_t count = 0;
  Eigen::Index row = 0;
  for (const auto& image_mask : mask) {
    for (bool m : image_mask) {
      if (m) {
        sum += (predictions.row(row) - targets.row(row)).squaredNorm();
        count += static_cast<std::size_t>(predictions.cols());
      }
      ++row;
    }
  }
  if (row != predictions.rows()) throw Error(ErrorCode::ShapeMismatch, "mask does not cover all prediction rows");
  return count ? sum / static_cast<double>(count) : 0.0;
}

MaeResult mae_forward_loss(const ModelCheckpoint& ckpt, std::span<const Raster> batch, std::uint64_t seed,
                           const ForwardOptions& options) {
  const auto& arch = ckpt.arch();
  require_decoder(ckpt);
  for (const auto& r : batch) check_raster(arch, r);
  const auto& p = ckpt.params();
  const auto P = arch.num_patches();
  const auto pd = arch.patch_dim();

  MaeResult result;
  result.mask = sample_mae_mask(arch, batch.size(), seed);
  result.predictions.resize(static_cast<Eigen::Index>(batch.size()) * P, pd);
  result.targets.resize(static_cast<Eigen::Index>(batch.size()) * P, pd);

  auto data = std::make_shared<detail::CacheData>();
  data->kind = detail::CacheKind::Mae;
  data->revision = ckpt.revision();
  data->arch = arch;
  data->images.resize(batch.size());

  const auto enc_blocks = block_params(p, "blocks.", arch.depth);
  const auto dec_blocks = block_params(p, "decoder_blocks.", arch.decoder_depth);
  const auto dec_pos = p.matrix("decoder_pos_embed");
  const auto mask_token = p.matrix("mask_token");

  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto& ic = data->images[i];
    ic.patches = patchify(batch[i], arch.patch_size);
    ic.masked.assign(result.mask[i].begin(), result.mask[i].end());
    ic.visible.clear();
    for (int k = 0; k < P; ++k)
      if (!ic.masked[static_cast<std::size_t>(k)]) ic.visible.push_back(k);
    encode_image(ckpt, enc_blocks, ic, options, i);

    const Matrix y = linear(ic.encoded, p.matrix("decoder_embed.weight"), p.matrix("decoder_embed.bias"));
    Matrix tokens(P + 1, arch.decoder_dim);
    tokens.row(0) = y.row(0);
    for (int k = 0; k < P; ++k) tokens.row(k + 1) = mask_token.row(0);
    for (std::size_t j = 0; j < ic.visible.size(); ++j) tokens.row(ic.visible[j] + 1) = y.row(static_cast<Eigen::Index>(j + 1));
    tokens += dec_pos;

    ic.decoder.assign(dec_blocks.size(), BlockCache{});
    // The reconstruction decoder never drops blocks.
    for (std::size_t b = 0; b < dec_blocks.size(); ++b)
      tokens = block_forward(tokens, dec_blocks[b], arch.decoder_heads, ic.decoder[b]);
    ic.dec_normed = layer_norm(tokens, p.matrix("decoder_norm.weight"), p.matrix("decoder_norm.bias"), ic.dec_norm);
    ic.pred = linear(ic.dec_normed, p.matrix("decoder_pred.weight"), p.matrix("decoder_pred.bias")).bottomRows(P);

    ic.target = ic.patches;
    if (arch.norm_pix_loss) {
      for (Eigen::Index r = 0; r < ic.target.rows(); ++r) {
        const double mean = ic.target.row(r).mean();
        const double var = (ic.target.row(r).array() - mean).square().sum() / std::max<double>(1.0, pd - 1.0);
        ic.target.row(r) = (ic.target.row(r).array() - mean) / std::sqrt(var + 1e-6);
      }
    }
    result.predictions.middleRows(static_cast<Eigen::Index>(i) * P, P) = ic.pred;
    result.targets.middleRows(static_cast<Eigen::Index>(i) * P, P) = ic.target;
  }
  result.loss = masked_mse(result.predictions, result.targets, result.mask);
  result.cache = ForwardCache(std::move(data));
  return result;
}

double cross_entropy(const Matrix& logits, std::span<const int> labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size())
    throw Error(ErrorCode::LengthMismatch, "logits/labels length mismatch");
  if (labels.empty()) return 0.0;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const RowVector row = logits.row(i);
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= logits.cols()) throw Error(ErrorCode::IdOutOfRange, "label " + std::to_string(y));
    loss += logsumexp(std::span<const double>(row.data(), static_cast<std::size_t>(row.size()))) - row(y);
  }
  return loss / static_cast<double>(logits.rows());
}

double soft_cross_entropy(const Matrix& logits, const Matrix& targets) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols())
    throw Error(ErrorCode::ShapeMismatch, "logits/soft target shapes differ");
  if (logits.rows() == 0) return 0.0;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const RowVector row = logits.row(i);
    const double lse = logsumexp(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
    loss += (targets.row(i).array() * (lse - row.array())).sum();
  }
  return loss / static_cast<double>(logits.rows());
}

GradientSet backprop(const ModelCheckpoint& ckpt, const ForwardCache& cache, const LossSpec& loss) {
  if (cache.empty()) throw Error(ErrorCode::StaleCache, "empty forward cache");
  const auto& data = cache.data();
  if (data.revision != ckpt.revision() || !(data.arch == ckpt.arch()))
    throw Error(ErrorCode::StaleCache, "checkpoint changed since the forward pass");
  const bool wants_mae = loss.kind == LossKind::Mae;
  if (wants_mae != (data.kind == detail::CacheKind::Mae))
    throw Error(ErrorCode::StaleCache, "forward cache kind does not match the requested loss");

  const auto& arch = ckpt.arch();
  const auto& p = ckpt.params();
  GradientSet g = p.zeros_like();
  const auto B = data.images.size();
  if (B == 0) return g;
  const double inv_b = 1.0 / static_cast<double>(B);
  const auto enc_blocks = block_params(p, "blocks.", arch.depth);

  if (!wants_mae) {
    if (!ckpt.has_head()) throw Error(ErrorCode::ShapeMismatch, "classification loss needs a head");
    Matrix dlogits(static_cast<Eigen::Index>(B), arch.num_classes);
    for (std::size_t i = 0; i < B; ++i) {
      const RowVector row = data.logits.row(static_cast<Eigen::Index>(i));
      const auto probs = softmax_stable(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
      for (int k = 0; k < arch.num_classes; ++k) dlogits(static_cast<Eigen::Index>(i), k) = probs[static_cast<std::size_t>(k)];
    }
    if (loss.kind == LossKind::CrossEntropy) {
      if (loss.labels.size() != B) throw Error(ErrorCode::LengthMismatch, "labels do not match batch");
      for (std::size_t i = 0; i < B; ++i) {
        const int y = loss.labels[i];
        if (y < 0 || y >= arch.num_classes) throw Error(ErrorCode::IdOutOfRange, "label " + std::to_string(y));
        dlogits(static_cast<Eigen::Index>(i), y) -= 1.0;
      }
    } else {
      if (!loss.soft_targets || loss.soft_targets->rows() != static_cast<Eigen::Index>(B) ||
          loss.soft_targets->cols() != arch.num_classes)
        throw Error(ErrorCode::ShapeMismatch, "soft targets do not match batch x classes");
      // d/dz of -sum_k t_k log p_k is p * sum_k t_k - t
      const Eigen::VectorXd mass = loss.soft_targets->rowwise().sum();
      dlogits = (dlogits.array().colwise() * mass.array()).matrix() - *loss.soft_targets;
    }
    dlogits *= inv_b;

    const auto head_w = p.matrix("head.weight");
    for (std::size_t i = 0; i < B; ++i) {
      const auto& ic = data.images[i];
      const RowVector dl = dlogits.row(static_cast<Eigen::Index>(i));
      g.matrix("head.weight").noalias() += ic.pooled.transpose() * dl;
      g.matrix("head.bias").row(0) += dl;
      const RowVector dpooled = dl * head_w.transpose();
      Matrix d_encoded = Matrix::Zero(ic.encoded.rows(), ic.encoded.cols());
      if (arch.pooling == Pooling::Mean) {
        const auto n = ic.encoded.rows() - 1;
        d_encoded.bottomRows(n).rowwise() = dpooled / static_cast<double>(n);
      } else {
        d_encoded.row(0) = dpooled;
      }
      encoder_backward(ckpt, enc_blocks, g, ic, std::move(d_encoded));
    }
    return g;
  }

  require_decoder(ckpt);
  const auto dec_blocks = block_params(p, "decoder_blocks.", arch.decoder_depth);
  auto dec_grads = block_grads(g, "decoder_blocks.", arch.decoder_depth);
  const auto P = arch.num_patches();
  const auto pd = arch.patch_dim();
  const double n_masked = static_cast<double>(arch.masked_count());

  for (std::size_t i = 0; i < B; ++i) {
    const auto& ic = data.images[i];
    Matrix d_pred_full = Matrix::Zero(P + 1, pd);
    for (int k = 0; k < P; ++k)
      if (ic.masked[static_cast<std::size_t>(k)])
        d_pred_full.row(k + 1) = 2.0 * (ic.pred.row(k) - ic.target.row(k)) * (inv_b / (n_masked * pd));

    Matrix d = linear_backward(d_pred_full, ic.dec_normed, p.matrix("decoder_pred.weight"),
                               g.matrix("decoder_pred.weight"), g.matrix("decoder_pred.bias"));
    d = layer_norm_backward(d, ic.dec_norm, p.matrix("decoder_norm.weight"), g.matrix("decoder_norm.weight"),
                            g.matrix("decoder_norm.bias"));
    for (int b = arch.decoder_depth - 1; b >= 0; --b) {
      const auto bi = static_cast<std::size_t>(b);
      d = block_backward(d, dec_blocks[bi], dec_grads[bi], arch.decoder_heads, ic.decoder[bi]);
    }
    g.matrix("decoder_pos_embed") += d;

    const auto nv = static_cast<Eigen::Index>(ic.visible.size());
    Matrix dy(nv + 1, arch.decoder_dim);
    dy.row(0) = d.row(0);
    for (Eigen::Index j = 0; j < nv; ++j) dy.row(j + 1) = d.row(ic.visible[static_cast<std::size_t>(j)] + 1);
    auto dmask = g.matrix("mask_token");
    for (int k = 0; k < P; ++k)
      if (ic.masked[static_cast<std::size_t>(k)]) dmask.row(0) += d.row(k + 1);

    Matrix d_encoded = linear_backward(dy, ic.encoded, p.matrix("decoder_embed.weight"),
                                       g.matrix("decoder_embed.weight"), g.matrix("decoder_embed.bias"));
    encoder_backward(ckpt, enc_blocks, g, ic, std::move(d_encoded));
  }
  return g;
}

}  // namespace weedid::nn
