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

#include "mtkd/records.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "mtkd/error.h"

namespace mtkd {

static_assert(std::endian::native == std::endian::little, "codecs assume a little-endian host");

std::string_view tag_name(RecordTag tag) {
  switch (tag) {
    case RecordTag::kFeatures: return "features";
    case RecordTag::kAsrTeacher: return "asr-teacher";
    case RecordTag::kAtTeacher: return "at-teacher";
    case RecordTag::kSvTeacher: return "sv-teacher";
    case RecordTag::kCheckpoint: return "checkpoint";
  }
  return "unknown";
}

std::size_t record_rank(RecordTag tag) {
  switch (tag) {
    case RecordTag::kFeatures:
    case RecordTag::kAsrTeacher: return 2;
    case RecordTag::kAtTeacher:
    case RecordTag::kSvTeacher: return 1;
    case RecordTag::kCheckpoint: break;
  }
  throw FormatError("tag " + std::string(tag_name(tag)) + " has no fixed record rank");
}

namespace {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(std::string_view s) {
  T v;
  std::memcpy(&v, s.data(), sizeof(T));
  return v;
}

bool valid_tag(std::uint8_t t) { return t <= 3 || t == 0xC0; }

}  // namespace

void ByteWriter::u16(std::uint16_t v) { put(out_, v); }
void ByteWriter::u32(std::uint32_t v) { put(out_, v); }
void ByteWriter::u64(std::uint64_t v) { put(out_, v); }
void ByteWriter::f32(float v) { put(out_, v); }
void ByteWriter::f64(double v) { put(out_, v); }
void ByteWriter::str16(std::string_view s) {
  if (s.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw FormatError("string of " + std::to_string(s.size()) + " bytes exceeds the u16 length field");
  }
  u16(static_cast<std::uint16_t>(s.size()));
  bytes(s);
}

void ByteReader::fail(const std::string& what) const {
  throw FormatError(source_ + ": " + what + " at offset " + std::to_string(pos_));
}

std::string_view ByteReader::take(std::size_t n) {
  if (data_.size() - pos_ < n) {
    fail("truncated input (need " + std::to_string(n) + " bytes, " +
         std::to_string(data_.size() - pos_) + " left)");
  }
  std::string_view s = data_.substr(pos_, n);
  pos_ += n;
  return s;
}

std::uint8_t ByteReader::u8() { return static_cast<std::uint8_t>(take(1)[0]); }
std::uint16_t ByteReader::u16() { return get<std::uint16_t>(take(2)); }
std::uint32_t ByteReader::u32() { return get<std::uint32_t>(take(4)); }
std::uint64_t ByteReader::u64() { return get<std::uint64_t>(take(8)); }
float ByteReader::f32() { return get<float>(take(4)); }
double ByteReader::f64() { return get<double>(take(8)); }
std::string_view ByteReader::bytes(std::size_t n) { return take(n); }
std::string ByteReader::str16() {
  const std::uint16_t n = u16();
  return std::string(take(n));
}

void write_preamble(ByteWriter& out, RecordTag tag) {
  out.bytes(std::string_view(kMagic, 4));
  out.u16(kFormatVersion);
  out.u8(static_cast<std::uint8_t>(tag));
}

RecordTag read_preamble(ByteReader& in) {
  const std::size_t start = in.offset();
  if (in.bytes(4) != std::string_view(kMagic, 4)) {
    throw FormatError(in.source() + ": bad magic (expected \"MTKD\") at offset " +
                      std::to_string(start));
  }
  const std::uint16_t version = in.u16();
  if (version != kFormatVersion) {
    in.fail("unsupported format version " + std::to_string(version));
  }
  const std::uint8_t tag = in.u8();
  if (!valid_tag(tag)) in.fail("unknown record tag " + std::to_string(tag));
  return static_cast<RecordTag>(tag);
}

std::string encode_shard(const Shard& shard) {
  const std::size_t rank = record_rank(shard.tag);
  ByteWriter out;
  write_preamble(out, shard.tag);
  out.u8(static_cast<std::uint8_t>(shard.dims.size()));
  for (std::uint32_t d : shard.dims) out.u32(d);
  std::unordered_set<std::string_view> seen;
  for (const ShardRecord& r : shard.records) {
    if (!seen.insert(r.id).second) throw DataError("duplicate record id '" + r.id + "'");
    if (r.shape.size() != rank) {
      throw ShapeError("record '" + r.id + "' has rank " + std::to_string(r.shape.size()) +
                       ", " + std::string(tag_name(shard.tag)) + " records need rank " +
                       std::to_string(rank));
    }
    std::size_t n = 1;
    for (std::uint32_t d : r.shape) n *= d;
    if (n != r.payload.size()) {
      throw ShapeError("record '" + r.id + "' payload length " + std::to_string(r.payload.size()) +
                       " does not match its shape");
    }
    if (!shard.dims.empty() && r.shape.back() != shard.dims.back()) {
      throw ShapeError("record '" + r.id + "' trailing dim " + std::to_string(r.shape.back()) +
                       " differs from header dim " + std::to_string(shard.dims.back()));
    }
    out.str16(r.id);
    for (std::uint32_t d : r.shape) out.u32(d);
    for (float v : r.payload) out.f32(v);
  }
  return out.take();
}

Shard decode_shard(std::string_view bytes, const std::string& source) {
  ByteReader in(bytes, source);
  Shard shard;
  shard.tag = read_preamble(in);
  if (shard.tag == RecordTag::kCheckpoint) in.fail("checkpoint file where a shard was expected");
  const std::size_t rank = record_rank(shard.tag);
  const std::uint8_t header_rank = in.u8();
  for (std::uint8_t i = 0; i < header_rank; ++i) shard.dims.push_back(in.u32());
  std::unordered_set<std::string> seen;
  while (!in.at_end()) {
    const std::size_t start = in.offset();
    ShardRecord r;
    r.id = in.str16();
    if (!seen.insert(r.id).second) {
      throw FormatError(source + ": duplicate record id '" + r.id + "' at offset " + std::to_string(start));
    }
    std::size_t n = 1;
    for (std::size_t i = 0; i < rank; ++i) {
      r.shape.push_back(in.u32());
      n *= r.shape.back();
    }
    if (!shard.dims.empty() && r.shape.back() != shard.dims.back()) {
      in.fail("record '" + r.id + "' trailing dim " + std::to_string(r.shape.back()) +
              " differs from header dim " + std::to_string(shard.dims.back()));
    }
    r.payload.resize(n);
    for (float& v : r.payload) v = in.f32();
    shard.records.push_back(std::move(r));
  }
  return shard;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_shard(const std::filesystem::path& path, const Shard& shard) {
  write_file(path, encode_shard(shard));
}

Shard read_shard(const std::filesystem::path& path) { return decode_shard(read_file(path), path.string()); }

Tensor record_tensor(const ShardRecord& record) {
  Shape shape(record.shape.begin(), record.shape.end());
  std::vector<double> data(record.payload.begin(), record.payload.end());
  return Tensor(std::move(shape), std::move(data));
}

ShardRecord make_record(std::string id, const Tensor& value) {
  ShardRecord r;
  r.id = std::move(id);
  for (std::size_t d : value.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw ShapeError("dimension exceeds u32");
    r.shape.push_back(static_cast<std::uint32_t>(d));
  }
  r.payload.reserve(value.size());
  for (double v : value.vec()) r.payload.push_back(static_cast<float>(v));
  return r;
}

}  // namespace mtkd
