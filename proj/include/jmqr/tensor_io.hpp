#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "jmqr/tensor.hpp"

namespace jmqr {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Binary tensor container.
///
/// Layout:
///   bytes 0..7    magic "JMQRTNS1"
///   bytes 8..15   header length H, unsigned 64-bit little-endian
///   next H bytes  JSON header: {"dtype":"f64","endianness":"little",
///                 "tensors":[{"name":..,"shape":[..],"offset":..}, ...]}
///   remainder     tensor payloads as little-endian IEEE-754 doubles; offsets are byte
///                 offsets from the start of the payload section
///
/// Round trips are bit-exact.
void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::filesystem::path& path);

std::string encode_tensors(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_tensors(const std::string& bytes);

/// Looks a tensor up by name; throws std::out_of_range if absent.
const Tensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);

}  // namespace jmqr
