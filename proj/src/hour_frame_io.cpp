#include "ps/hour_frame_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <sstream>

namespace ps {
namespace {

static_assert(std::endian::native == std::endian::little,
              "FHF1 encoding assumes a little-endian host");

class ByteWriter {
 public:
  explicit ByteWriter(std::vector<std::byte>& out) : out_(out) {}

  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::byte*>(&value);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::byte*>(data);
    out_.insert(out_.end(), p, p + n);
  }

 private:
  std::vector<std::byte>& out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::istream& in) : in_(in) {}

  void get_bytes(void* dst, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw Error(ErrorCode::Truncated, std::string("FHF1 stream truncated in ") + what);
  }
  template <typename T>
  T get(const char* what) {
    T value{};
    get_bytes(&value, sizeof(T), what);
    return value;
  }

 private:
  std::istream& in_;
};

}  // namespace

std::vector<std::byte> encode_hour_frame(const HourFrame& frame) {
  frame.validate();
  std::vector<std::byte> out;
  out.reserve(32 + frame.values.size() * sizeof(float));
  ByteWriter w(out);
  w.put_bytes(kFrameMagic, 4);
  w.put<std::uint32_t>(kFrameVersion);
  w.put<std::uint32_t>(frame.catalog.tick_rate_hz);
  w.put<std::uint64_t>(frame.start_time);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(frame.n_devices()));
  w.put<std::uint32_t>(frame.n_ticks);
  for (const auto& d : frame.catalog.devices) {
    if (d.name.size() > 0xFFFF) throw Error(ErrorCode::Invariant, "device name too long");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(d.name.size()));
    w.put_bytes(d.name.data(), d.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(d.kind));
  }
  w.put_bytes(frame.values.data(), frame.values.size() * sizeof(float));
  return out;
}

std::size_t write_hour_frame(const HourFrame& frame, std::ostream& sink) {
  const auto bytes = encode_hour_frame(frame);
  sink.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!sink) throw Error(ErrorCode::Io, "failed writing FHF1 frame");
  return bytes.size();
}

HourFrame read_hour_frame(std::istream& source) {
  ByteReader r(source);
  char magic[4];
  r.get_bytes(magic, 4, "magic");
  if (std::memcmp(magic, kFrameMagic, 4) != 0) throw Error(ErrorCode::Format, "not an FHF1 stream");
  const auto version = r.get<std::uint32_t>("version");
  if (version > kFrameVersion)
    throw Error(ErrorCode::UnsupportedVersion,
                "FHF1 version " + std::to_string(version) + " is not supported");
  if (version == 0) throw Error(ErrorCode::Format, "FHF1 version 0 is invalid");

  HourFrame frame;
  frame.catalog.tick_rate_hz = r.get<std::uint32_t>("header");
  frame.start_time = r.get<std::uint64_t>("header");
  const auto n_devices = r.get<std::uint32_t>("header");
  frame.n_ticks = r.get<std::uint32_t>("header");
  if (std::uint64_t{frame.n_ticks} > std::uint64_t{frame.catalog.tick_rate_hz} * 3600)
    throw Error(ErrorCode::Format, "FHF1 header declares more than one hour of ticks");

  frame.catalog.devices.reserve(n_devices);
  for (std::uint32_t i = 0; i < n_devices; ++i) {
    DeviceSpec d;
    d.name.resize(r.get<std::uint16_t>("device table"));
    r.get_bytes(d.name.data(), d.name.size(), "device table");
    const auto kind = r.get<std::uint8_t>("device table");
    if (kind > 3) throw Error(ErrorCode::Format, "unknown device kind " + std::to_string(kind));
    d.kind = static_cast<DeviceKind>(kind);
    frame.catalog.devices.push_back(std::move(d));
  }
  frame.values.resize(std::size_t{n_devices} * frame.n_ticks);
  r.get_bytes(frame.values.data(), frame.values.size() * sizeof(float), "payload");
  return frame;
}

HourFrame decode_hour_frame(const std::vector<std::byte>& bytes) {
  std::string buf(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  std::istringstream in(buf);
  return read_hour_frame(in);
}

std::size_t save_hour_frame(const HourFrame& frame, const std::filesystem::path& path) {
  const auto bytes = encode_hour_frame(frame);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string());
  return bytes.size();
}

HourFrame load_hour_frame(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return read_hour_frame(in);
}

std::vector<std::filesystem::path> list_frame_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw Error(ErrorCode::Io, dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".fhf") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace ps
