#include "deepmorph/morph.hpp"

#include <algorithm>
#include <limits>

#include "deepmorph/errors.hpp"

namespace deepmorph {

namespace {

void check_operands(const FeatureMap& input, const StructElem& se) {
  if (input.channels() != se.channels()) {
    throw ShapeError("morphology: input has " + std::to_string(input.channels()) +
                     " channels, structuring element " + std::to_string(se.channels()));
  }
  if (se.m() > input.width() || se.n() > input.height()) {
    throw ShapeError("morphology: " + std::to_string(se.m()) + "x" + std::to_string(se.n()) +
                     " window larger than " + input.shape_string() + " map");
  }
}

// Shared kernel. Dilation keeps the strictly larger candidate and erosion the
// strictly smaller one, so the first offset in (i, j) scan order wins ties.
template <MorphKind Kind>
FeatureMap apply(const FeatureMap& input, const StructElem& se, std::int32_t* argcache) {
  check_operands(input, se);
  const int width = input.width();
  const int height = input.height();
  const int m = se.m();
  const int n = se.n();
  const int ox = se.origin_x();
  const int oy = se.origin_y();
  FeatureMap out(input.channels(), width, height);
  for (int c = 0; c < input.channels(); ++c) {
    auto src = input.plane(c);
    auto dst = out.plane(c);
    for (int y = 0; y < height; ++y) {
      const int j_lo = std::max(0, oy - y);
      const int j_hi = std::min(n - 1, height - 1 - y + oy);
      for (int x = 0; x < width; ++x) {
        const int i_lo = std::max(0, ox - x);
        const int i_hi = std::min(m - 1, width - 1 - x + ox);
        double best = Kind == MorphKind::dilation ? -std::numeric_limits<double>::infinity()
                                                  : std::numeric_limits<double>::infinity();
        std::int32_t winner = -1;
        for (int i = i_lo; i <= i_hi; ++i) {
          const int xx = x + i - ox;
          for (int j = j_lo; j <= j_hi; ++j) {
            const double v = src[static_cast<std::size_t>(y + j - oy) * width + xx];
            if constexpr (Kind == MorphKind::dilation) {
              const double cand = v + se.weight(c, i, j);
              if (cand > best) {
                best = cand;
                winner = i * n + j;
              }
            } else {
              const double cand = v - se.weight(c, i, j);
              if (cand < best) {
                best = cand;
                winner = i * n + j;
              }
            }
          }
        }
        const std::size_t p = static_cast<std::size_t>(y) * width + x;
        dst[p] = best;
        if (argcache != nullptr) argcache[c * out.plane_size() + p] = winner;
      }
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(MorphKind kind) {
  return kind == MorphKind::dilation ? "dilation" : "erosion";
}

MorphKind parse_morph_kind(std::string_view name) {
  if (name == "dilation") return MorphKind::dilation;
  if (name == "erosion") return MorphKind::erosion;
  throw InvalidArgument("unknown morphology kind '" + std::string(name) + "'");
}

StructElem::StructElem(int channels, int m, int n)
    : StructElem(channels, m, n, (m - 1) / 2, (n - 1) / 2) {}

StructElem::StructElem(int channels, int m, int n, int origin_x, int origin_y)
    : weights_(channels, m, n, 0.0),
      grad_(channels, m, n, 0.0),
      origin_x_(origin_x),
      origin_y_(origin_y) {
  if (channels <= 0 || m <= 0 || n <= 0) {
    throw InvalidArgument("structuring element needs positive channels and extents");
  }
  if (origin_x < 0 || origin_x >= m || origin_y < 0 || origin_y >= n) {
    throw InvalidArgument("structuring element origin lies outside its window");
  }
}

StructElem StructElem::reflected(int channels, int m, int n) {
  return StructElem(channels, m, n, (m - 1) - (m - 1) / 2, (n - 1) - (n - 1) / 2);
}

void StructElem::set_weights(FeatureMap w) {
  if (!w.same_shape(weights_)) {
    throw ShapeError("structuring element weights " + w.shape_string() + " do not match " +
                     weights_.shape_string());
  }
  weights_ = std::move(w);
}

FeatureMap dilate(const FeatureMap& input, const StructElem& se) {
  return apply<MorphKind::dilation>(input, se, nullptr);
}

FeatureMap erode(const FeatureMap& input, const StructElem& se) {
  return apply<MorphKind::erosion>(input, se, nullptr);
}

MorphLayer::MorphLayer(MorphKind kind, StructElem se, bool trainable)
    : kind_(kind), se_(std::move(se)), trainable_(trainable) {}

FeatureMap MorphLayer::forward(const FeatureMap& input) {
  cache_valid_ = false;
  argcache_.resize(input.size());
  FeatureMap out = kind_ == MorphKind::dilation
                       ? apply<MorphKind::dilation>(input, se_, argcache_.data())
                       : apply<MorphKind::erosion>(input, se_, argcache_.data());
  cache_channels_ = input.channels();
  cache_width_ = input.width();
  cache_height_ = input.height();
  cache_valid_ = true;
  return out;
}

FeatureMap MorphLayer::backward(const FeatureMap& upstream) {
  if (!cache_valid_) throw ContractError("morph backward called without a matching forward pass");
  if (upstream.channels() != cache_channels_ || upstream.width() != cache_width_ ||
      upstream.height() != cache_height_) {
    throw ContractError("morph backward: upstream gradient " + upstream.shape_string() +
                        " does not match the cached forward shape");
  }
  const int n = se_.n();
  const int ox = se_.origin_x();
  const int oy = se_.origin_y();
  double sign = kind_ == MorphKind::dilation ? 1.0 : -1.0;
  if (gradient_fault_) sign = -sign;
  FeatureMap input_grad(cache_channels_, cache_width_, cache_height_);
  for (int c = 0; c < cache_channels_; ++c) {
    auto g = upstream.plane(c);
    auto dst = input_grad.plane(c);
    const std::size_t base = c * upstream.plane_size();
    for (int y = 0; y < cache_height_; ++y) {
      for (int x = 0; x < cache_width_; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * cache_width_ + x;
        const std::int32_t k = argcache_[base + p];
        const int i = k / n;
        const int j = k % n;
        se_.grad(c, i, j) += sign * g[p];
        dst[static_cast<std::size_t>(y + j - oy) * cache_width_ + (x + i - ox)] += g[p];
      }
    }
  }
  cache_valid_ = false;
  return input_grad;
}

FeatureMap morph_backward(MorphLayer& layer, const FeatureMap& upstream_grad) {
  return layer.backward(upstream_grad);
}

MorphBlock::MorphBlock(std::string name, std::vector<MorphLayer> layers, bool residual)
    : name_(std::move(name)), layers_(std::move(layers)), residual_(residual) {
  for (const auto& layer : layers_) {
    if (layer.se().channels() != layers_.front().se().channels()) {
      throw ShapeError("morph block " + name_ + ": layers disagree on channel count");
    }
  }
}

namespace {

std::vector<MorphLayer> stages(int channels, int se_size, int depth, MorphKind first,
                               MorphKind second, bool trainable) {
  if (channels <= 0 || se_size <= 0 || depth < 0) {
    throw InvalidArgument("morph block needs positive channels/SE size and depth >= 0");
  }
  auto element = [&](MorphKind kind) {
    return kind == MorphKind::dilation ? StructElem::reflected(channels, se_size, se_size)
                                       : StructElem(channels, se_size, se_size);
  };
  std::vector<MorphLayer> layers;
  for (int k = 0; k < depth; ++k) layers.emplace_back(first, element(first), trainable);
  for (int k = 0; k < depth; ++k) layers.emplace_back(second, element(second), trainable);
  return layers;
}

}  // namespace

MorphBlock MorphBlock::dmop(int channels, int se_size, int depth) {
  return MorphBlock("dmop", stages(channels, se_size, depth, MorphKind::erosion, MorphKind::dilation, true), true);
}

MorphBlock MorphBlock::dmcl(int channels, int se_size, int depth) {
  return MorphBlock("dmcl", stages(channels, se_size, depth, MorphKind::dilation, MorphKind::erosion, true), true);
}

MorphBlock MorphBlock::flat_opening(int channels, int se_size, int depth) {
  return MorphBlock("op", stages(channels, se_size, depth, MorphKind::erosion, MorphKind::dilation, false), false);
}

MorphBlock MorphBlock::flat_closing(int channels, int se_size, int depth) {
  return MorphBlock("cl", stages(channels, se_size, depth, MorphKind::dilation, MorphKind::erosion, false), false);
}

int MorphBlock::channels() const {
  return layers_.empty() ? 0 : layers_.front().se().channels();
}

bool MorphBlock::trainable() const {
  return std::any_of(layers_.begin(), layers_.end(), [](const MorphLayer& l) { return l.trainable(); });
}

FeatureMap MorphBlock::forward(const FeatureMap& input) {
  forward_done_ = false;
  FeatureMap x = input;
  for (auto& layer : layers_) x = layer.forward(x);
  forward_done_ = true;
  return residual_ ? map_add(input, x) : x;
}

FeatureMap MorphBlock::backward(const FeatureMap& upstream_grad) {
  if (!forward_done_) throw ContractError("block backward called without a matching forward pass");
  forward_done_ = false;
  FeatureMap g = upstream_grad;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->backward(g);
  return residual_ ? map_add(g, upstream_grad) : g;
}

void MorphBlock::zero_grad() {
  for (auto& layer : layers_) layer.se().zero_grad();
}

void MorphBlock::set_gradient_fault(bool on) {
  for (auto& layer : layers_) layer.set_gradient_fault(on);
}

}  // namespace deepmorph
