#include "dsvit/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>

#include "dsvit/errors.hpp"

namespace dsvit {

namespace {

template <typename T>
void put(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw IoError("truncated checkpoint " + path);
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

std::uint64_t read_header(std::istream& in, const std::string& path) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "DSCK", 4) != 0) {
    throw IoError(path + " is not a checkpoint file");
  }
  auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  return get<std::uint64_t>(in, path);
}

}  // namespace

std::string format_hash(std::uint64_t hash) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

void save_checkpoint(const std::string& path, DualStreamModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  std::vector<std::pair<std::string, Tensor>> params;
  model.visit_parameters([&](const std::string& name, Tensor& t) { params.emplace_back(name, t); });
  out.write("DSCK", 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, model.model_config().hash());
  put<double>(out, model.alpha());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    for (double v : t.values()) put<double>(out, v);
  }
  if (!out) throw IoError("write failed for " + path);
}

std::uint64_t read_checkpoint_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_header(in, path);
}

void load_checkpoint(const std::string& path, DualStreamModel& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::uint64_t stored = read_header(in, path);
  std::uint64_t expected = model.model_config().hash();
  if (stored != expected) {
    throw ConfigError("checkpoint " + path + " has config hash " + format_hash(stored) +
                      " but the model config hashes to " + format_hash(expected));
  }
  double alpha = get<double>(in, path);
  auto count = get<std::uint32_t>(in, path);
  std::map<std::string, std::pair<Shape, std::vector<double>>> stored_params;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto len = get<std::uint32_t>(in, path);
    if (len > 4096) throw IoError(path + ": implausible parameter name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw IoError("truncated checkpoint " + path);
    auto rank = get<std::uint32_t>(in, path);
    if (rank > 8) throw IoError(path + ": implausible rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(in, path));
    std::size_t n = shape_numel(shape);
    if (n > (1ULL << 28)) throw IoError(path + ": implausible size for " + name);
    std::vector<double> values(n);
    for (auto& v : values) v = get<double>(in, path);
    stored_params[name] = {std::move(shape), std::move(values)};
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes in " + path);

  std::vector<std::pair<Tensor, const std::vector<double>*>> targets;
  model.visit_parameters([&](const std::string& name, Tensor& t) {
    auto it = stored_params.find(name);
    if (it == stored_params.end()) throw IoError(path + " lacks parameter " + name);
    if (it->second.first != t.shape()) {
      throw IoError(path + ": parameter " + name + " has shape " + shape_string(it->second.first) +
                    ", model expects " + shape_string(t.shape()));
    }
    targets.emplace_back(t, &it->second.second);
  });
  if (targets.size() != stored_params.size()) throw IoError(path + " holds parameters the model lacks");
  for (auto& [t, values] : targets) {
    auto dst = t.mutable_data();
    std::copy(values->begin(), values->end(), dst.begin());
  }
  model.set_alpha(alpha);
}

}  // namespace dsvit
