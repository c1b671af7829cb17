#include "ces/surrogate.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace ces::surrogate {

static_assert(std::endian::native == std::endian::little, "checkpoints are written in host order");

namespace {

constexpr char kMagic[8] = {'C', 'E', 'S', 'N', 'E', 'T', '\0', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw std::runtime_error("checkpoint is truncated");
  return v;
}

void put_vector(std::ostream& os, const VectorXd& v) {
  put<std::uint64_t>(os, static_cast<std::uint64_t>(v.size()));
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

VectorXd get_vector(std::istream& is, long expected) {
  const auto n = get<std::uint64_t>(is);
  if (static_cast<long>(n) != expected) throw std::runtime_error("checkpoint parameter count does not match its header");
  VectorXd v(expected);
  if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(expected * sizeof(double))))
    throw std::runtime_error("checkpoint is truncated");
  return v;
}

std::uint8_t pack(const Features& f) {
  return static_cast<std::uint8_t>(f.scale_by_norm | f.remove_rigid << 1 | f.sobolev_g << 2 | f.sobolev_hvp << 3);
}

Features unpack(std::uint8_t b) {
  return Features{(b & 1) != 0, (b & 2) != 0, (b & 4) != 0, (b & 8) != 0};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const SurrogateParams& params,
                     const std::optional<AdamState>& state, const std::map<std::string, std::string>& meta) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof kMagic);
  put(os, kVersion);
  put<std::int32_t>(os, params.arch.N);
  put<double>(os, params.arch.side);
  put<std::int32_t>(os, params.arch.width);
  put<std::int32_t>(os, params.arch.hidden_layers);
  put<std::uint8_t>(os, pack(params.arch.features));
  put_vector(os, flatten(params));
  put<std::uint8_t>(os, state ? 1 : 0);
  if (state) {
    put<std::int64_t>(os, state->step);
    put<std::int32_t>(os, state->epoch);
    put_vector(os, state->m);
    put_vector(os, state->v);
  }
  if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());

  std::ofstream side(path.string() + ".meta");
  const Features& f = params.arch.features;
  side << "format = " << kVersion << "\n"
       << "N = " << params.arch.N << "\nside = " << params.arch.side << "\nwidth = " << params.arch.width
       << "\nhidden_layers = " << params.arch.hidden_layers << "\nscale_by_norm = " << f.scale_by_norm
       << "\nremove_rigid = " << f.remove_rigid << "\nsobolev_g = " << f.sobolev_g
       << "\nsobolev_hvp = " << f.sobolev_hvp << "\n";
  for (const auto& [k, v] : meta) side << k << " = " << v << "\n";
  if (!side) throw std::runtime_error("failed writing checkpoint metadata for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw std::runtime_error(path.string() + " is not a surrogate checkpoint");
  if (get<std::uint32_t>(is) != kVersion) throw std::runtime_error("unsupported checkpoint version");
  ArchConfig arch;
  arch.N = get<std::int32_t>(is);
  arch.side = get<double>(is);
  arch.width = get<std::int32_t>(is);
  arch.hidden_layers = get<std::int32_t>(is);
  arch.features = unpack(get<std::uint8_t>(is));

  Checkpoint ck;
  ck.params = init_params(arch, 0);
  unflatten(ck.params, get_vector(is, ck.params.num_parameters()));
  if (get<std::uint8_t>(is)) {
    AdamState st;
    st.step = get<std::int64_t>(is);
    st.epoch = get<std::int32_t>(is);
    st.m = get_vector(is, ck.params.num_parameters());
    st.v = get_vector(is, ck.params.num_parameters());
    ck.state = std::move(st);
  }
  if (!ck.params.all_finite()) throw std::runtime_error("checkpoint holds non-finite weights");
  return ck;
}

}  // namespace ces::surrogate
