#include "jobgen/tensor/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "jobgen/common/error.hpp"

namespace jobgen::tensor {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'J', 'G', 'C', 'K', 'P', 'T', '0', '1'};

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <class T>
T get(std::istream& is, const std::filesystem::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw std::runtime_error("checkpoint " + path.string() + ": truncated");
  }
  return v;
}

std::string get_string(std::istream& is, const std::filesystem::path& path) {
  auto n = get<std::uint32_t>(is, path);
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) throw std::runtime_error("checkpoint " + path.string() + ": truncated");
  return s;
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void Checkpoint::add_store(const ParameterStore& store, const std::string& prefix) {
  for (const auto& p : store.all()) tensors.emplace_back(prefix + p.name, p.value);
}

void Checkpoint::load_store(ParameterStore& store, const std::string& prefix) const {
  for (auto& p : store.all()) {
    const Tensor* t = find(prefix + p.name);
    if (!t) throw ConfigError("checkpoint (" + role + "): missing tensor " + prefix + p.name);
    if (t->shape() != p.value.shape()) {
      throw ConfigError("checkpoint (" + role + "): tensor " + prefix + p.name + " has shape " +
                        shape_string(t->shape()) + ", model expects " + shape_string(p.value.shape()));
    }
    p.value = *t;
  }
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    os.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(os, kCheckpointVersion);
    put_string(os, ckpt.role);
    put_string(os, ckpt.meta.dump());
    put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
      put_string(os, name);
      put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
      for (std::size_t d : t.shape()) put<std::uint64_t>(os, d);
      os.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingPrerequisite(path.string());
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("checkpoint " + path.string() + ": bad magic");
  }
  auto version = get<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint " + path.string() + ": unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.role = get_string(is, path);
  ckpt.meta = nlohmann::json::parse(get_string(is, path));
  auto count = get<std::uint32_t>(is, path);
  ckpt.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_string(is, path);
    auto rank = get<std::uint32_t>(is, path);
    Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(is, path);
    std::vector<double> data(shape_numel(shape));
    if (!data.empty() &&
        !is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)))) {
      throw std::runtime_error("checkpoint " + path.string() + ": truncated tensor " + name);
    }
    ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return ckpt;
}

void add_optimizer_state(Checkpoint& ckpt, const OptimizerState& state) {
  ckpt.meta["optimizer"] = {{"learning_rate", state.learning_rate}, {"step", state.step}};
  for (const auto& [name, t] : state.first_moment) ckpt.tensors.emplace_back("opt.m." + name, t);
  for (const auto& [name, t] : state.second_moment) ckpt.tensors.emplace_back("opt.v." + name, t);
}

bool has_optimizer_state(const Checkpoint& ckpt) { return ckpt.meta.contains("optimizer"); }

OptimizerState read_optimizer_state(const Checkpoint& ckpt) {
  if (!has_optimizer_state(ckpt)) throw ConfigError("checkpoint (" + ckpt.role + "): no optimizer state");
  OptimizerState state;
  state.learning_rate = ckpt.meta["optimizer"].at("learning_rate").get<double>();
  state.step = ckpt.meta["optimizer"].at("step").get<std::uint64_t>();
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.rfind("opt.m.", 0) == 0) state.first_moment.emplace(name.substr(6), t);
    if (name.rfind("opt.v.", 0) == 0) state.second_moment.emplace(name.substr(6), t);
  }
  return state;
}

}  // namespace jobgen::tensor
