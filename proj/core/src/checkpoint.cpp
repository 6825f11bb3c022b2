#include "hashsurf/checkpoint.hpp"

#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "hashsurf/common.hpp"

namespace hashsurf {

using nlohmann::json;

namespace {

void write_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw ConfigError("truncated checkpoint");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_f32_blob(std::ostream& out, const std::vector<float>& data) {
  write_u64(out, data.size());
  static_assert(sizeof(float) == 4);
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * 4));
}

std::vector<float> read_f32_blob(std::istream& in) {
  const uint64_t n = read_u64(in);
  std::vector<float> data(n);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * 4));
  if (!in) throw ConfigError("truncated checkpoint blob");
  return data;
}

json header_json(std::istream& in) {
  const uint64_t len = read_u64(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ConfigError("truncated checkpoint header");
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("checkpoint header parse error: ") + e.what());
  }
}

}  // namespace

template <class S>
void save_checkpoint(const std::filesystem::path& path, const std::string& config_json,
                     const ParameterStore<S>& store, int64_t step, const Rng& rng) {
  json header;
  header["version"] = kCheckpointVersion;
  header["config"] = json::parse(config_json);
  header["step"] = step;
  header["adam_steps"] = store.adam_step_count();
  header["rng"] = rng.state_hex();
  json arrays = json::array();
  for (int h = 0; h < store.count(); ++h) {
    const auto& a = store.array(h);
    arrays.push_back({{"name", a.name}, {"size", a.value.size()}});
  }
  header["arrays"] = std::move(arrays);
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint: " + path.string());
  write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));

  std::vector<float> blob;
  for (int h = 0; h < store.count(); ++h) {
    const auto& a = store.array(h);
    auto cast = [&](const AlignedVec<S>& src) {
      blob.resize(src.size());
      for (size_t i = 0; i < src.size(); ++i) blob[i] = static_cast<float>(src[i]);
      write_f32_blob(out, blob);
    };
    cast(a.value);
    cast(a.m);
    cast(a.v);
  }
  if (!out) throw ConfigError("failed writing checkpoint: " + path.string());
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read checkpoint: " + path.string());
  const json header = header_json(in);
  CheckpointMeta meta;
  try {
    meta.version = header.at("version");
    if (meta.version != kCheckpointVersion) {
      throw ConfigError("unsupported checkpoint version");
    }
    meta.config_json = header.at("config").dump();
    meta.step = header.at("step");
    meta.adam_steps = header.at("adam_steps");
    meta.rng = Rng::from_state_hex(header.at("rng").get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("checkpoint header missing field: ") + e.what());
  }
  return meta;
}

template <class S>
CheckpointMeta load_checkpoint(const std::filesystem::path& path, ParameterStore<S>& store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read checkpoint: " + path.string());
  const json header = header_json(in);
  CheckpointMeta meta;
  meta.version = header.at("version");
  if (meta.version != kCheckpointVersion) throw ConfigError("unsupported checkpoint version");
  meta.config_json = header.at("config").dump();
  meta.step = header.at("step");
  meta.adam_steps = header.at("adam_steps");
  meta.rng = Rng::from_state_hex(header.at("rng").get<std::string>());

  const auto& arrays = header.at("arrays");
  if (static_cast<int>(arrays.size()) != store.count()) {
    throw ConfigError("checkpoint array count does not match the model");
  }
  for (int h = 0; h < store.count(); ++h) {
    auto& a = store.array(h);
    const std::string name = arrays.at(h).at("name");
    const uint64_t size = arrays.at(h).at("size");
    if (name != a.name || size != a.value.size()) {
      throw ConfigError("checkpoint array mismatch at " + name);
    }
    auto restore = [&](AlignedVec<S>& dst) {
      const auto blob = read_f32_blob(in);
      if (blob.size() != dst.size()) throw ConfigError("checkpoint blob size mismatch");
      for (size_t i = 0; i < blob.size(); ++i) dst[i] = static_cast<S>(blob[i]);
    };
    restore(a.value);
    restore(a.m);
    restore(a.v);
  }
  store.set_adam_step_count(meta.adam_steps);
  return meta;
}

template void save_checkpoint<float>(const std::filesystem::path&, const std::string&,
                                     const ParameterStore<float>&, int64_t, const Rng&);
template void save_checkpoint<double>(const std::filesystem::path&, const std::string&,
                                      const ParameterStore<double>&, int64_t, const Rng&);
template CheckpointMeta load_checkpoint<float>(const std::filesystem::path&,
                                               ParameterStore<float>&);
template CheckpointMeta load_checkpoint<double>(const std::filesystem::path&,
                                                ParameterStore<double>&);

}  // namespace hashsurf
