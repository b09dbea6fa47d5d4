#include "dlpo/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "dlpo/errors.hpp"

namespace dlpo {

namespace {

constexpr char kMagic[4] = {'D', 'L', 'P', 'O'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

template <typename T>
void put(std::string& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.append(bytes, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[value & 0xf];
    value >>= 4;
  }
  return out;
}

std::filesystem::path meta_path(const std::filesystem::path& checkpoint) {
  std::filesystem::path p = checkpoint;
  p += ".meta";
  return p;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename onto '" + path.string() + "'");
  }
}

void save_checkpoint(const std::filesystem::path& path,
                     std::span<const double> params, const CheckpointMeta& meta) {
  std::string blob;
  blob.reserve(16 + params.size() * sizeof(double));
  blob.append(kMagic, sizeof(kMagic));
  put<std::uint32_t>(blob, kCheckpointVersion);
  put<std::uint64_t>(blob, params.size());
  for (const double v : params) put<double>(blob, v);
  write_file_atomic(path, blob);

  const DenoiserDims& d = meta.dims;
  std::ostringstream text;
  text << "format_version = " << kCheckpointVersion << "\n"
       << "param_count = " << params.size() << "\n"
       << "n = " << d.n << "\n"
       << "k = " << d.k << "\n"
       << "t_steps = " << d.steps << "\n"
       << "d_c = " << d.d_c << "\n"
       << "d_t = " << d.d_t << "\n"
       << "h1 = " << d.h1 << "\n"
       << "h2 = " << d.h2 << "\n"
       << "config_hash = " << meta.config_hash << "\n";
  write_file_atomic(meta_path(path), text.str());
}

std::vector<double> load_checkpoint(const std::filesystem::path& path,
                                    std::size_t expected_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  const std::string blob((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");

  const std::string where = "checkpoint '" + path.string() + "': ";
  if (blob.size() < 16 || std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(where + "bad magic");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = take<std::uint32_t>(blob, pos);
  if (version != kCheckpointVersion) {
    throw FormatError(where + "unsupported version " + std::to_string(version));
  }
  const auto count = take<std::uint64_t>(blob, pos);
  if (expected_count != 0 && count != expected_count) {
    throw FormatError(where + "holds " + std::to_string(count) +
                      " parameters, expected " + std::to_string(expected_count));
  }
  if (count > (blob.size() - pos) / sizeof(double) ||
      blob.size() - pos != count * sizeof(double)) {
    throw FormatError(where + "payload size does not match count " +
                      std::to_string(count));
  }
  std::vector<double> params(count);
  std::memcpy(params.data(), blob.data() + pos, count * sizeof(double));
  return params;
}

}  // namespace dlpo
