#include "objn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "objn/errors.hpp"

namespace objn {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void put_u16(std::ostream& os, std::uint16_t v) { os.write(reinterpret_cast<const char*>(&v), 2); }
void put_u8(std::ostream& os, std::uint8_t v) { os.write(reinterpret_cast<const char*>(&v), 1); }

std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
std::uint16_t get_u16(std::istream& is) {
  std::uint16_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 2);
  return v;
}
std::uint8_t get_u8(std::istream& is) {
  std::uint8_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 1);
  return v;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write("OBJN", 4);
  put_u32(os, kCheckpointVersion);
  put_u8(os, model.config().is_bbox_head() ? 1 : 0);
  const std::string cfg = network_config_to_json(model.config());
  put_u32(os, static_cast<std::uint32_t>(cfg.size()));
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  put_u32(os, static_cast<std::uint32_t>(model.params().size()));
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    const auto& name = model.param_names()[i];
    const auto& t = model.params()[i];
    put_u16(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u8(os, static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.dims()) put_u32(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(sizeof(float) * t.size()));
  }
  if (!os) throw IoError("write failed for checkpoint: " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ModelError("cannot open checkpoint: " + path);

  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "OBJN", 4) != 0)
    throw ModelError("bad magic in checkpoint " + path);
  const std::uint32_t version = get_u32(is);
  if (!is || version != kCheckpointVersion)
    throw ModelError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
  const std::uint8_t head_tag = get_u8(is);
  const std::uint32_t cfg_len = get_u32(is);
  if (!is) throw ModelError("truncated checkpoint header in " + path);
  std::string cfg_text(cfg_len, '\0');
  is.read(cfg_text.data(), cfg_len);
  if (!is) throw ModelError("truncated config blob in " + path);

  const NetworkConfig cfg = network_config_from_json(cfg_text);
  if ((head_tag == 1) != cfg.is_bbox_head())
    throw ModelError("head kind tag disagrees with embedded config in " + path);

  Model model = Model::build(cfg);
  std::vector<bool> seen(model.params().size(), false);

  const std::uint32_t count = get_u32(is);
  if (!is) throw ModelError("truncated tensor count in " + path);
  for (std::uint32_t ti = 0; ti < count; ++ti) {
    const std::uint16_t name_len = get_u16(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const std::uint8_t rank = get_u8(is);
    if (!is) throw ModelError("truncated tensor header in " + path);
    std::vector<std::int64_t> dims;
    for (int d = 0; d < rank; ++d) dims.push_back(static_cast<std::int64_t>(get_u32(is)));
    if (!is) throw ModelError("truncated tensor dims in " + path);

    const auto& names = model.param_names();
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ModelError("unexpected parameter '" + name + "' in " + path);
    const auto slot = static_cast<std::size_t>(it - names.begin());
    if (seen[slot]) throw ModelError("duplicate parameter '" + name + "' in " + path);
    auto& dst = model.params()[slot];
    if (dims != dst.dims())
      throw ModelError("parameter '" + name + "' shape " + Tensor::shape_string(dims) +
                       " does not match config shape " + dst.shape_str() + " in " + path);
    is.read(reinterpret_cast<char*>(dst.data()),
            static_cast<std::streamsize>(sizeof(float) * dst.size()));
    if (!is) throw ModelError("truncated tensor data for '" + name + "' in " + path);
    seen[slot] = true;
  }
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (!seen[i])
      throw ModelError("missing parameter '" + model.param_names()[i] + "' in " + path);
  return model;
}

}  // namespace objn
