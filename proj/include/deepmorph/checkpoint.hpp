#ifndef DEEPMORPH_CHECKPOINT_HPP_
#define DEEPMORPH_CHECKPOINT_HPP_

#include <filesystem>

#include "deepmorph/morph.hpp"

namespace deepmorph {

/// Writes `<path>` (text manifest: block name, residual flag, one line per
/// layer with kind, shape, window origin and trainability) and `<path>.se` (one map record
/// per SE, in layer order).
void save_checkpoint(const MorphBlock& block, const std::filesystem::path& path);
MorphBlock load_checkpoint(const std::filesystem::path& path);

/// True when the file starts with the checkpoint manifest signature.
bool is_checkpoint(const std::filesystem::path& path);

}  // namespace deepmorph

#endif  // DEEPMORPH_CHECKPOINT_HPP_
