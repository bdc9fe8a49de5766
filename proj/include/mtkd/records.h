// Copyright 2026 The mtkd Authors
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

// Little-endian binary framing shared by teacher-label shards, corpus feature
// files and checkpoints.
//
// Shard / feature file:
//   "MTKD" | version u16 | tag u8 | rank u8 | dims u32 x rank
//   then records until EOF:
//   id_len u16 | id bytes | shape u32 x record_rank | payload f32 x prod(shape)
// record_rank is fixed by the tag: 2 for features and ASR teacher frames, 1 for
// AT logits and SV vectors. The trailing record axis must equal the header's
// last dim.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mtkd/tensor.h"

namespace mtkd {

inline constexpr char kMagic[4] = {'M', 'T', 'K', 'D'};
inline constexpr std::uint16_t kFormatVersion = 1;

enum class RecordTag : std::uint8_t {
  kFeatures = 0,
  kAsrTeacher = 1,
  kAtTeacher = 2,
  kSvTeacher = 3,
  kCheckpoint = 0xC0,
};

std::string_view tag_name(RecordTag tag);
std::size_t record_rank(RecordTag tag);

struct ShardRecord {
  std::string id;
  std::vector<std::uint32_t> shape;
  std::vector<float> payload;

  friend bool operator==(const ShardRecord&, const ShardRecord&) = default;
};

struct Shard {
  RecordTag tag = RecordTag::kFeatures;
  std::vector<std::uint32_t> dims;  // header dims, e.g. {D_teacher}
  std::vector<ShardRecord> records;

  friend bool operator==(const Shard&, const Shard&) = default;
};

std::string encode_shard(const Shard& shard);
// `source` names the input in error messages.
Shard decode_shard(std::string_view bytes, const std::string& source = "<memory>");

void write_shard(const std::filesystem::path& path, const Shard& shard);
Shard read_shard(const std::filesystem::path& path);

// 32-bit storage, 64-bit compute.
Tensor record_tensor(const ShardRecord& record);
ShardRecord make_record(std::string id, const Tensor& value);

std::string read_file(const std::filesystem::path& path);
// Writes through a temporary file and renames, so readers never see partial output.
void write_file(const std::filesystem::path& path, std::string_view bytes);

// Primitive little-endian writer/reader used by the codecs.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void bytes(std::string_view s) { out_.append(s); }
  void str16(std::string_view s);  // u16 length prefix
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  ByteReader(std::string_view data, std::string source) : data_(data), source_(std::move(source)) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string_view bytes(std::size_t n);
  std::string str16();

  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == data_.size(); }
  const std::string& source() const { return source_; }
  // Throws FormatError naming the source and current offset.
  [[noreturn]] void fail(const std::string& what) const;

 private:
  std::string_view take(std::size_t n);

  std::string_view data_;
  std::string source_;
  std::size_t pos_ = 0;
};

// Reads and validates "MTKD" | version | tag, returning the tag.
RecordTag read_preamble(ByteReader& in);
void write_preamble(ByteWriter& out, RecordTag tag);

}  // namespace mtkd
