#include "tfnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include "tfnet/error.hpp"

namespace tfnet {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::istream& in, const std::string& what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw DataError("checkpoint truncated while reading " + what);
  return v;
}

std::string take_string(std::istream& in, std::uint64_t n, const std::string& what) {
  if (n > (1ull << 32)) throw DataError("checkpoint: implausible length for " + what);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw DataError("checkpoint truncated while reading " + what);
  return s;
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write("TFCK", 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, ckpt.seed);
  put<std::uint64_t>(out, ckpt.step);
  const std::string meta = ckpt.meta.is_null() ? "{}" : ckpt.meta.dump();
  put<std::uint64_t>(out, meta.size());
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  put<std::uint64_t>(out, ckpt.tensors.size());
  for (const auto& [name, t] : ckpt.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.raw()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "TFCK", 4) != 0) throw DataError(path.string() + " is not a checkpoint");
  const auto version = take<std::uint32_t>(in, "version");
  if (version != kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.seed = take<std::uint64_t>(in, "seed");
  ckpt.step = take<std::uint64_t>(in, "step");
  const std::string meta = take_string(in, take<std::uint64_t>(in, "metadata size"), "metadata");
  ckpt.meta = nlohmann::json::parse(meta, nullptr, false);
  if (ckpt.meta.is_discarded()) throw DataError("checkpoint metadata is not valid JSON");
  const auto count = take<std::uint64_t>(in, "tensor count");
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = take_string(in, take<std::uint32_t>(in, "name size"), "tensor name");
    const auto rank = take<std::uint32_t>(in, "rank of " + name);
    if (rank > 8) throw DataError("checkpoint: implausible rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = take<std::uint64_t>(in, "shape of " + name);
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.raw()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw DataError("checkpoint truncated inside " + name);
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

Checkpoint capture(const std::vector<nn::Parameter*>& parameters, const std::vector<nn::Parameter*>& buffers) {
  Checkpoint ckpt;
  std::unordered_set<std::string> seen;
  for (const auto* list : {&parameters, &buffers})
    for (const auto* p : *list) {
      if (!seen.insert(p->name).second) throw DataError("duplicate tensor name " + p->name);
      ckpt.tensors.emplace_back(p->name, p->value);
    }
  return ckpt;
}

void restore(const Checkpoint& ckpt, const std::vector<nn::Parameter*>& parameters,
             const std::vector<nn::Parameter*>& buffers) {
  for (const auto* list : {&parameters, &buffers})
    for (auto* p : *list) {
      const Tensor* t = ckpt.find(p->name);
      if (t == nullptr) throw DataError("checkpoint lacks tensor " + p->name);
      if (t->shape() != p->value.shape()) {
        throw DataError("checkpoint tensor " + p->name + " has shape " + shape_string(t->shape()) + ", model expects " +
                        shape_string(p->value.shape()));
      }
      p->value = *t;
    }
}

}  // namespace tfnet
