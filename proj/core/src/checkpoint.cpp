#include "ewflow/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "json.hpp"

namespace ewflow {

namespace {

void put_f32_le(std::string& out, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, sizeof u);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFFu));
}

float get_f32_le(const unsigned char* p) {
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  float f;
  std::memcpy(&f, &u, sizeof f);
  return f;
}

}  // namespace

void save_checkpoint(const std::string& path, const Mlp& model, const std::string& meta_json) {
  nlohmann::json header;
  header["format"] = "ewflow-checkpoint";
  header["version"] = 1;
  header["architecture"] = nlohmann::json::parse(model.spec().to_json());
  header["param_count"] = model.param_count();
  header["layout"] = "for each layer in order: W column-major (out x in), then b; float32 little-endian";
  header["meta"] = nlohmann::json::parse(meta_json);

  std::string blob;
  blob.reserve(model.param_count() * 4);
  for (double p : model.params()) put_f32_le(blob, static_cast<float>(p));

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  os << header.dump() << '\n';
  os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!os) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  std::string line;
  std::getline(is, line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint '" + path + "': bad header: " + e.what());
  }
  if (header.value("format", "") != "ewflow-checkpoint")
    throw std::runtime_error("checkpoint '" + path + "': not an ewflow checkpoint");
  const MlpSpec spec = MlpSpec::from_json(header.at("architecture").dump());
  Checkpoint ck{Mlp(spec), header.value("meta", nlohmann::json::object()).dump()};
  const std::size_t n = header.at("param_count").get<std::size_t>();
  if (n != ck.model.param_count())
    throw std::runtime_error("checkpoint '" + path + "': param_count does not match architecture");
  std::vector<unsigned char> blob(n * 4);
  is.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (static_cast<std::size_t>(is.gcount()) != blob.size())
    throw std::runtime_error("checkpoint '" + path + "': truncated parameter blob");
  for (std::size_t i = 0; i < n; ++i) ck.model.params()[i] = get_f32_le(blob.data() + 4 * i);
  return ck;
}

Checkpoint load_checkpoint(const std::string& path, const MlpSpec& expected) {
  Checkpoint ck = load_checkpoint(path);
  if (!(ck.model.spec() == expected))
    throw std::runtime_error("checkpoint '" + path + "': architecture mismatch (stored " + ck.model.spec().to_json() +
                             ", expected " + expected.to_json() + ")");
  return ck;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return fnv1a64(ss.str());
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace ewflow
