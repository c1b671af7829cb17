#include "ces/pipeline.hpp"

#include "json.hpp"
#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace ces::pipeline {

static_assert(std::endian::native == std::endian::little, "dataset files are written in host order");

namespace {

constexpr char kMagic[8] = {'C', 'E', 'S', 'D', 'A', 'T', 'A', '1'};

long doubles_per_record(long n) { return n + 2 + 1 + n + n * (n + 1) / 2; }
long record_bytes(long n) { return doubles_per_record(n) * 8 + 1 + 8; }

void encode(const SampleRecord& r, std::vector<char>& buf) {
  const long n = r.u.size();
  std::vector<double> d;
  d.reserve(doubles_per_record(n));
  d.insert(d.end(), r.u.data(), r.u.data() + n);
  d.push_back(r.xi.alpha);
  d.push_back(r.xi.beta);
  d.push_back(r.energy);
  d.insert(d.end(), r.grad.data(), r.grad.data() + n);
  for (long i = 0; i < n; ++i)
    for (long j = i; j < n; ++j) d.push_back(r.hessian(i, j));
  const std::size_t off = buf.size();
  buf.resize(off + record_bytes(n));
  std::memcpy(buf.data() + off, d.data(), d.size() * 8);
  const auto src = static_cast<std::uint8_t>(r.source);
  std::memcpy(buf.data() + off + d.size() * 8, &src, 1);
  std::memcpy(buf.data() + off + d.size() * 8 + 1, &r.seed, 8);
}

SampleRecord decode(const char* p, long n, long index) {
  std::vector<double> d(doubles_per_record(n));
  std::memcpy(d.data(), p, d.size() * 8);
  for (double v : d)
    if (!std::isfinite(v)) throw DatasetError("record " + std::to_string(index) + " holds non-finite values", index);
  SampleRecord r;
  long k = 0;
  r.u = Eigen::Map<VectorXd>(d.data(), n);
  k += n;
  r.xi.alpha = d[k++];
  r.xi.beta = d[k++];
  r.energy = d[k++];
  r.grad = Eigen::Map<VectorXd>(d.data() + k, n);
  k += n;
  r.hessian.resize(n, n);
  for (long i = 0; i < n; ++i)
    for (long j = i; j < n; ++j) r.hessian(i, j) = r.hessian(j, i) = d[k++];
  std::uint8_t src;
  std::memcpy(&src, p + d.size() * 8, 1);
  if (src > 2) throw DatasetError("record " + std::to_string(index) + " has an unknown source tag", index);
  r.source = static_cast<Source>(src);
  std::memcpy(&r.seed, p + d.size() * 8 + 1, 8);
  return r;
}

}  // namespace

void dataset_append(const std::filesystem::path& path, std::span<const SampleRecord> records) {
  if (records.empty()) return;
  const auto n = static_cast<std::uint32_t>(records.front().u.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.u.size() != n || r.grad.size() != n || r.hessian.rows() != n || r.hessian.cols() != n)
      throw std::invalid_argument("record " + std::to_string(i) + " has inconsistent dimensions");
  }
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  if (!fresh) {
    std::ifstream is(path, std::ios::binary);
    char magic[8];
    std::uint32_t dofs = 0;
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0 || !is.read(reinterpret_cast<char*>(&dofs), 4))
      throw std::runtime_error(path.string() + " is not a dataset file");
    if (dofs != n) throw std::invalid_argument("record dimension does not match " + path.string());
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::app);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  std::vector<char> buf;
  if (fresh) {
    buf.insert(buf.end(), kMagic, kMagic + 8);
    buf.resize(12);
    std::memcpy(buf.data() + 8, &n, 4);
  }
  for (const auto& r : records) encode(r, buf);
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

std::vector<SampleRecord> dataset_load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  char magic[8];
  std::uint32_t n = 0;
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0 || !is.read(reinterpret_cast<char*>(&n), 4))
    throw std::runtime_error(path.string() + " is not a dataset file");
  const long size = record_bytes(n);
  std::vector<char> buf(size);
  std::vector<SampleRecord> out;
  for (long index = 0;; ++index) {
    is.read(buf.data(), size);
    const std::streamsize got = is.gcount();
    if (got == 0) break;
    if (got != size)
      throw DatasetError(path.string() + ": record " + std::to_string(index) + " is truncated", index);
    out.push_back(decode(buf.data(), n, index));
  }
  return out;
}

std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (is) {
    is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (is.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(is.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

std::map<std::string, FileSummary> write_manifest(const std::filesystem::path& data_dir) {
  std::map<std::string, FileSummary> out;
  nlohmann::json j;
  j["format"] = 1;
  for (const char* name : {"train.bin", "val.bin"}) {
    const auto path = data_dir / name;
    if (!std::filesystem::exists(path)) continue;
    FileSummary s;
    for (const auto& r : dataset_load(path)) {
      ++s.records;
      ++s.by_source[to_string(r.source)];
    }
    s.sha256 = file_sha256(path);
    j["files"][name] = {{"records", s.records}, {"by_source", s.by_source}, {"sha256", s.sha256}};
    out[name] = s;
  }
  std::ofstream os(data_dir / "manifest.txt");
  os << j.dump(2) << "\n";
  if (!os) throw std::runtime_error("failed writing the manifest in " + data_dir.string());
  return out;
}

std::map<std::string, FileSummary> read_manifest(const std::filesystem::path& data_dir) {
  std::ifstream is(data_dir / "manifest.txt");
  if (!is) throw std::runtime_error("no manifest in " + data_dir.string());
  const nlohmann::json j = nlohmann::json::parse(is);
  std::map<std::string, FileSummary> out;
  if (!j.contains("files")) return out;
  for (const auto& [name, f] : j["files"].items()) {
    FileSummary s;
    s.records = f.at("records").get<long>();
    s.by_source = f.at("by_source").get<std::map<std::string, long>>();
    s.sha256 = f.at("sha256").get<std::string>();
    out[name] = s;
  }
  return out;
}

void split_train_val(std::span<const SampleRecord> records, std::vector<SampleRecord>& train,
                     std::vector<SampleRecord>& val) {
  for (std::size_t i = 0; i < records.size(); ++i) (i % 12 == 11 ? val : train).push_back(records[i]);
}

}  // namespace ces::pipeline
