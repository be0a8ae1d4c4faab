#ifndef DEEPMORPH_MORPH_HPP_
#define DEEPMORPH_MORPH_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "deepmorph/feature_map.hpp"

namespace deepmorph {

enum class MorphKind { dilation, erosion };

std::string_view to_string(MorphKind kind);
MorphKind parse_morph_kind(std::string_view name);

/// Non-flat structuring element: C x M x N additive weights plus their
/// accumulated gradient. M runs along x (columns), N along y (rows).
///
/// Index (i, j) addresses the window offset (i - origin_x(), j - origin_y()).
/// The default origin is floor((extent - 1) / 2): odd windows are centred and
/// even windows extend one pixel further right / down. `reflected` elements
/// use (extent - 1) - that origin, the mirror image of the default window;
/// chaining a default erosion with a reflected dilation gives an opening that
/// does not translate its input. Offset (0, 0) is always part of the window.
class StructElem {
 public:
  StructElem() = default;
  /// Freshly constructed elements are all-zero.
  StructElem(int channels, int m, int n);
  StructElem(int channels, int m, int n, int origin_x, int origin_y);
  static StructElem reflected(int channels, int m, int n);

  int channels() const { return weights_.channels(); }
  int m() const { return weights_.width(); }
  int n() const { return weights_.height(); }
  int origin_x() const { return origin_x_; }
  int origin_y() const { return origin_y_; }

  double weight(int c, int i, int j) const { return weights_.at(c, j, i); }
  double& weight(int c, int i, int j) { return weights_.at(c, j, i); }
  double grad(int c, int i, int j) const { return grad_.at(c, j, i); }
  double& grad(int c, int i, int j) { return grad_.at(c, j, i); }

  /// Weights as a C x M x N map (the serialized record form).
  const FeatureMap& weights() const { return weights_; }
  FeatureMap& weights() { return weights_; }
  const FeatureMap& gradient() const { return grad_; }
  FeatureMap& gradient() { return grad_; }

  void set_weights(FeatureMap w);
  void zero_grad() { grad_.fill(0.0); }

  bool operator==(const StructElem&) const = default;

 private:
  FeatureMap weights_;
  FeatureMap grad_;
  int origin_x_ = 0;
  int origin_y_ = 0;
};

/// out[c,y,x] = max over in-bounds window offsets (di,dj) of
/// in[c, y+dj, x+di] + se[c,i,j]. Neighbours outside the map are excluded.
FeatureMap dilate(const FeatureMap& input, const StructElem& se);
/// out[c,y,x] = min over in-bounds window offsets of in[c, y+dj, x+di] - se[c,i,j].
FeatureMap erode(const FeatureMap& input, const StructElem& se);

/// One trainable dilation or erosion.
///
/// forward() records, for each output pixel, the flat offset index i*N + j
/// that attained the extremum (first in row-major (i, j) order on ties).
/// backward() consumes that record: it routes each upstream gradient entry
/// to the winning SE weight (+1 dilation, -1 erosion) and to the winning
/// input pixel, then invalidates the record.
class MorphLayer {
 public:
  MorphLayer(MorphKind kind, StructElem se, bool trainable = true);

  FeatureMap forward(const FeatureMap& input);
  FeatureMap backward(const FeatureMap& upstream);

  MorphKind kind() const { return kind_; }
  const StructElem& se() const { return se_; }
  StructElem& se() { return se_; }
  bool trainable() const { return trainable_; }
  void set_trainable(bool on) { trainable_ = on; }

  bool has_cache() const { return cache_valid_; }
  const std::vector<std::int32_t>& argcache() const { return argcache_; }

  /// Test hook: negate the SE gradient produced by backward().
  void set_gradient_fault(bool on) { gradient_fault_ = on; }

 private:
  MorphKind kind_;
  StructElem se_;
  bool trainable_;
  bool gradient_fault_ = false;
  bool cache_valid_ = false;
  int cache_width_ = 0;
  int cache_height_ = 0;
  int cache_channels_ = 0;
  std::vector<std::int32_t> argcache_;
};

FeatureMap morph_backward(MorphLayer& layer, const FeatureMap& upstream_grad);

/// Ordered chain of morphology layers with an optional residual connection
/// (output = input + chain(input)).
class MorphBlock {
 public:
  MorphBlock() = default;
  MorphBlock(std::string name, std::vector<MorphLayer> layers, bool residual);

  /// Deep opening: `depth` erosions then `depth` dilations, trainable,
  /// zero-initialised SEs of se_size x se_size, residual on. Dilations use
  /// reflected windows (see StructElem), here and in the other factories.
  static MorphBlock dmop(int channels, int se_size = 2, int depth = 2);
  /// Deep closing: `depth` dilations then `depth` erosions, residual on.
  static MorphBlock dmcl(int channels, int se_size = 3, int depth = 4);
  /// Classical flat opening / closing: frozen zero-offset SEs (the additive
  /// form of a flat all-ones window), residual off.
  static MorphBlock flat_opening(int channels, int se_size = 2, int depth = 1);
  static MorphBlock flat_closing(int channels, int se_size = 3, int depth = 1);

  FeatureMap forward(const FeatureMap& input);
  FeatureMap backward(const FeatureMap& upstream_grad);

  const std::string& name() const { return name_; }
  bool residual() const { return residual_; }
  std::vector<MorphLayer>& layers() { return layers_; }
  const std::vector<MorphLayer>& layers() const { return layers_; }
  /// Number of input channels the block expects (0 for an empty block).
  int channels() const;
  bool trainable() const;

  void zero_grad();
  void set_gradient_fault(bool on);

 private:
  std::string name_;
  std::vector<MorphLayer> layers_;
  bool residual_ = false;
  bool forward_done_ = false;
};

}  // namespace deepmorph

#endif  // DEEPMORPH_MORPH_HPP_
