#include "mmg/io.hpp"

#include "mmg/error.hpp"

#include <fstream>
#include <sstream>
#include <system_error>

namespace mmg {

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) fail(ErrorCode::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorCode::IoError, "cannot rename onto " + path.string());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void ByteWriter::put_string(std::string_view s) {
  put(static_cast<std::uint32_t>(s.size()));
  out_.append(s);
}

std::string ByteReader::get_string() {
  const auto n = get<std::uint32_t>();
  return std::string(get_raw(n));
}

std::string_view ByteReader::get_raw(std::size_t n) {
  need(n);
  auto s = data_.substr(pos_, n);
  pos_ += n;
  return s;
}

void ByteReader::need(std::size_t n) const {
  if (pos_ + n > data_.size()) fail(ErrorCode::ParseError, "truncated binary container");
}

}  // namespace mmg
