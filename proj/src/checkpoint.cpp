#include "deepmorph/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <string>

#include "deepmorph/errors.hpp"

namespace deepmorph {

namespace {

constexpr const char* kSignature = "deepmorph-checkpoint 1";

std::filesystem::path records_path(const std::filesystem::path& manifest) {
  auto p = manifest;
  p += ".se";
  return p;
}

[[noreturn]] void malformed(const std::filesystem::path& path, const std::string& why) {
  throw MalformedHeaderError("checkpoint " + path.string() + ": " + why);
}

}  // namespace

void save_checkpoint(const MorphBlock& block, const std::filesystem::path& path) {
  std::ofstream manifest(path, std::ios::binary);
  if (!manifest) throw IoError("cannot write " + path.string());
  manifest << kSignature << '\n';
  manifest << "name " << block.name() << '\n';
  manifest << "residual " << (block.residual() ? 1 : 0) << '\n';
  manifest << "records " << records_path(path).filename().string() << '\n';
  manifest << "layers " << block.layers().size() << '\n';
  for (std::size_t i = 0; i < block.layers().size(); ++i) {
    const MorphLayer& l = block.layers()[i];
    manifest << "layer " << i << ' ' << to_string(l.kind()) << ' ' << l.se().channels() << ' '
             << l.se().m() << ' ' << l.se().n() << ' ' << l.se().origin_x() << ' '
             << l.se().origin_y() << ' ' << (l.trainable() ? 1 : 0) << '\n';
  }
  if (!manifest) throw IoError("write failed: " + path.string());

  std::ofstream records(records_path(path), std::ios::binary);
  if (!records) throw IoError("cannot write " + records_path(path).string());
  for (const MorphLayer& l : block.layers()) write_map(records, l.se().weights());
  if (!records) throw IoError("write failed: " + records_path(path).string());
}

bool is_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string first;
  return in && std::getline(in, first) && first == kSignature;
}

MorphBlock load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kSignature) malformed(path, "bad signature");

  auto field = [&](const char* key) {
    if (!std::getline(in, line)) malformed(path, std::string("missing ") + key);
    std::istringstream s(line);
    std::string k, v;
    s >> k >> v;
    if (k != key || v.empty()) malformed(path, std::string("expected ") + key);
    return v;
  };
  const std::string name = field("name");
  const std::string residual = field("residual");
  const std::string records_name = field("records");
  std::size_t count = 0;
  try {
    count = std::stoul(field("layers"));
  } catch (const std::logic_error&) {
    malformed(path, "bad layer count");
  }

  std::ifstream records(path.parent_path() / records_name, std::ios::binary);
  if (!records) throw IoError("cannot open SE records " + (path.parent_path() / records_name).string());

  std::vector<MorphLayer> layers;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) malformed(path, "missing layer line");
    std::istringstream s(line);
    std::string tag, kind;
    std::size_t index = 0;
    int c = 0, m = 0, n = 0, ox = 0, oy = 0, trainable = 0;
    if (!(s >> tag >> index >> kind >> c >> m >> n >> ox >> oy >> trainable) || tag != "layer" || index != i) {
      malformed(path, "bad layer line '" + line + "'");
    }
    StructElem se(c, m, n, ox, oy);
    FeatureMap w = read_map(records);
    if (w.channels() != c || w.width() != m || w.height() != n) {
      malformed(path, "SE record " + std::to_string(i) + " does not match its manifest shape");
    }
    se.set_weights(std::move(w));
    layers.emplace_back(parse_morph_kind(kind), std::move(se), trainable != 0);
  }
  return MorphBlock(name, std::move(layers), residual == "1");
}

}  // namespace deepmorph
