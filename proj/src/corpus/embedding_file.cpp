#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "otalign/corpus.hpp"
#include "otalign/error.hpp"

namespace otalign {

namespace {

constexpr std::array<char, 5> kMagic = {'O', 'T', 'E', 'M', 'B'};
constexpr std::uint8_t kVersion = 0x01;

void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff),
                         static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff),
                         static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void bytes(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError(std::string("truncated embedding file while reading ") +
                        what);
    }
  }

  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4, what);
    return static_cast<std::uint32_t>(b[0]) |
           (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& in_;
};

}  // namespace

std::string_view to_string(Granularity g) {
  return g == Granularity::kWord ? "word" : "subword";
}

Granularity parse_granularity(std::string_view name) {
  if (name == "word") return Granularity::kWord;
  if (name == "subword") return Granularity::kSubword;
  throw InputError("unknown unit granularity '" + std::string(name) + "'");
}

PointCloud EmbeddedSentence::cloud() const {
  return PointCloud(vectors.cast<double>());
}

EmbeddingFile read_embeddings(std::istream& in) {
  Reader r(in);
  std::array<char, 5> magic{};
  r.bytes(magic.data(), magic.size(), "magic");
  if (magic != kMagic) throw FormatError("bad magic: not an OTEMB file");
  char version = 0;
  r.bytes(&version, 1, "version");
  if (static_cast<std::uint8_t>(version) != kVersion) {
    throw FormatError("unsupported embedding file version " +
                      std::to_string(static_cast<unsigned char>(version)));
  }

  EmbeddingFile file;
  const std::uint32_t tag = r.u32("granularity");
  if (tag > 1) throw FormatError("bad granularity tag " + std::to_string(tag));
  file.granularity = static_cast<Granularity>(tag);
  file.dim = r.u32("dimension");
  if (file.dim == 0) throw FormatError("embedding dimension is zero");
  const std::uint32_t count = r.u32("sentence count");

  for (std::uint32_t s = 0; s < count; ++s) {
    EmbeddedSentence sentence;
    const std::uint32_t n = r.u32("unit count");
    if (n == 0) {
      throw FormatError("sentence " + std::to_string(s) + " has no units");
    }
    for (std::uint32_t k = 0; k < n; ++k) {
      const std::uint32_t len = r.u32("unit length");
      std::string unit(len, '\0');
      r.bytes(unit.data(), len, "unit string");
      sentence.units.push_back(std::move(unit));
    }
    sentence.vectors.resize(n, file.dim);
    float* data = sentence.vectors.data();
    for (std::size_t k = 0; k < static_cast<std::size_t>(n) * file.dim; ++k) {
      data[k] = std::bit_cast<float>(r.u32("vector data"));
    }
    file.sentences.push_back(std::move(sentence));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after embedding payload");
  return file;
}

EmbeddingFile load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_embeddings(in);
}

void write_embeddings(std::ostream& out, const EmbeddingFile& file) {
  if (file.dim == 0) throw InputError("embedding dimension is zero");
  out.write(kMagic.data(), kMagic.size());
  out.put(static_cast<char>(kVersion));
  put_u32(out, static_cast<std::uint32_t>(file.granularity));
  put_u32(out, file.dim);
  put_u32(out, static_cast<std::uint32_t>(file.sentences.size()));
  for (const EmbeddedSentence& s : file.sentences) {
    const auto n = static_cast<std::uint32_t>(s.units.size());
    if (n == 0 || s.vectors.rows() != n || s.vectors.cols() != file.dim) {
      throw InputError("sentence shape does not match units and dimension");
    }
    put_u32(out, n);
    for (const std::string& u : s.units) {
      put_u32(out, static_cast<std::uint32_t>(u.size()));
      out.write(u.data(), static_cast<std::streamsize>(u.size()));
    }
    const float* data = s.vectors.data();
    for (Eigen::Index k = 0; k < s.vectors.size(); ++k) {
      put_u32(out, std::bit_cast<std::uint32_t>(data[k]));
    }
  }
  if (!out) throw FormatError("failed writing embedding file");
}

void write_embeddings(const std::filesystem::path& path,
                      const EmbeddingFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  write_embeddings(out, file);
}

}  // namespace otalign
