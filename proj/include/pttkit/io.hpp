// Copyright 2026 The pttkit authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <nlohmann/json.hpp>

#include "pttkit/complex_tensor.hpp"

namespace pttkit {

//=========================================================================
// Tensor checkpoint records: a JSON header {name, shape, axis_labels,
// dtype:"c128"} followed by little-endian interleaved (re, im) doubles in
// canonical row-major order.  A model file is a length-prefixed sequence
// of such records (u64 LE header length, header bytes, payload).
//=========================================================================

namespace iodetail {

inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("tensor record: truncated length prefix");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void write_f64_le(std::ostream& os, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  write_u64(os, bits);
}

inline double read_f64_le(std::istream& is) {
  std::uint64_t bits = read_u64(is);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace iodetail

inline void write_tensor_record(std::ostream& os, const std::string& name,
                                const ComplexTensor& t) {
  nlohmann::json header;
  header["name"] = name;
  header["shape"] = t.shape();
  header["axis_labels"] = t.axis_labels();
  header["dtype"] = "c128";
  const std::string h = header.dump();
  iodetail::write_u64(os, h.size());
  os.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (std::size_t i = 0; i < t.numel(); ++i) {
    iodetail::write_f64_le(os, t[i].real());
    iodetail::write_f64_le(os, t[i].imag());
  }
}

inline std::pair<std::string, ComplexTensor> read_tensor_record(std::istream& is) {
  const std::uint64_t hlen = iodetail::read_u64(is);
  std::string h(hlen, '\0');
  is.read(h.data(), static_cast<std::streamsize>(hlen));
  if (!is) throw std::runtime_error("tensor record: truncated header");
  nlohmann::json header = nlohmann::json::parse(h);
  if (header.at("dtype") != "c128")
    throw std::runtime_error("tensor record: unsupported dtype");
  std::vector<std::size_t> shape = header.at("shape").get<std::vector<std::size_t>>();
  std::vector<std::string> labels = header.at("axis_labels").get<std::vector<std::string>>();
  ComplexTensor t(shape, labels);
  for (std::size_t i = 0; i < t.numel(); ++i) {
    const double re = iodetail::read_f64_le(is);
    const double im = iodetail::read_f64_le(is);
    t[i] = cplx(re, im);
  }
  if (!is) throw std::runtime_error("tensor record: truncated payload");
  return {header.at("name").get<std::string>(), std::move(t)};
}

}  // namespace pttkit
