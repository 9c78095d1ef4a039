#include "jmqr/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

namespace jmqr {

namespace {

constexpr char kMagic[8] = {'J', 'M', 'Q', 'R', 'T', 'N', 'S', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return v;
}

void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

double get_f64(const std::string& in, std::size_t pos) {
  return std::bit_cast<double>(get_u64(in, pos));
}

}  // namespace

std::string encode_tensors(const std::vector<NamedTensor>& tensors) {
  nlohmann::json header;
  header["dtype"] = "f64";
  header["endianness"] = "little";
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    header["tensors"].push_back({{"name", t.name}, {"shape", t.tensor.shape()}, {"offset", offset}});
    offset += 8 * t.tensor.size();
  }
  const std::string text = header.dump();

  std::string out(kMagic, kMagic + 8);
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const auto& t : tensors) {
    for (double v : t.tensor.data()) put_f64(out, v);
  }
  return out;
}

std::vector<NamedTensor> decode_tensors(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw std::runtime_error("not a tensor container (bad magic)");
  }
  const std::uint64_t header_len = get_u64(bytes, 8);
  if (header_len > bytes.size() - 16) throw std::runtime_error("tensor container: truncated header");
  const nlohmann::json header = nlohmann::json::parse(bytes.substr(16, header_len));
  if (header.value("dtype", "") != "f64" || header.value("endianness", "") != "little") {
    throw std::runtime_error("tensor container: unsupported dtype or endianness");
  }
  const std::size_t payload = 16 + header_len;
  std::vector<NamedTensor> out;
  for (const auto& entry : header.at("tensors")) {
    Shape shape = entry.at("shape").get<Shape>();
    const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
    const std::size_t count = element_count(shape);
    if (payload + offset + 8 * count > bytes.size()) {
      throw std::runtime_error("tensor container: payload for '" +
                               entry.at("name").get<std::string>() + "' is truncated");
    }
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) values[i] = get_f64(bytes, payload + offset + 8 * i);
    out.push_back({entry.at("name").get<std::string>(), Tensor(std::move(shape), std::move(values))});
  }
  return out;
}

void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  const std::string bytes = encode_tensors(tensors);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::vector<NamedTensor> load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_tensors(bytes);
}

const Tensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw std::out_of_range("tensor '" + name + "' not found in container");
}

}  // namespace jmqr
