#include <array>
#include <bit>
#include <fstream>

#include "json.hpp"

#include "otalign/error.hpp"
#include "otalign/finetune.hpp"

namespace otalign {

namespace {

constexpr std::array<char, 5> kMagic = {'O', 'T', 'C', 'K', 'P'};
constexpr std::uint8_t kVersion = 0x01;

void put_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 4);
}

void put_tensor(std::ostream& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      put_u64(out, std::bit_cast<std::uint64_t>(m(i, j)));
    }
  }
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void bytes(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError("truncated checkpoint");
    }
  }

  std::uint64_t uint(int width) {
    unsigned char b[8];
    bytes(reinterpret_cast<char*>(b), static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }

  Matrix tensor(Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = std::bit_cast<double>(uint(8));
    }
    return m;
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& in_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const EmbeddingModel& model,
                     const AdamOptimizer& optimizer) {
  const nlohmann::json manifest = {
      {"format", "otalign-checkpoint"},
      {"vocab_size", model.vocabulary().size()},
      {"dim", model.dim()},
      {"window", model.window()},
      {"mixer", model.has_mixer()},
      {"adam_steps", optimizer.steps()},
      {"tensors", model.has_mixer()
                      ? nlohmann::json{"table", "mixer", "table.m", "table.v",
                                       "mixer.m", "mixer.v"}
                      : nlohmann::json{"table", "table.m", "table.v"}}};
  const std::string text = manifest.dump();

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out.write(kMagic.data(), kMagic.size());
    out.put(static_cast<char>(kVersion));
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out << text;
    for (const std::string& u : model.vocabulary()) {
      put_u32(out, static_cast<std::uint32_t>(u.size()));
      out << u;
    }
    put_tensor(out, model.table());
    if (model.has_mixer()) put_tensor(out, model.mixer());
    put_tensor(out, optimizer.table_moments().m);
    put_tensor(out, optimizer.table_moments().v);
    if (model.has_mixer()) {
      put_tensor(out, optimizer.mixer_moments().m);
      put_tensor(out, optimizer.mixer_moments().v);
    }
    out.flush();
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw FormatError("failed writing " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  Reader r(in);
  std::array<char, 5> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kMagic) throw FormatError("bad magic: not a checkpoint");
  char version = 0;
  r.bytes(&version, 1);
  if (static_cast<std::uint8_t>(version) != kVersion) {
    throw FormatError("unsupported checkpoint version");
  }

  std::string text(r.uint(4), '\0');
  r.bytes(text.data(), text.size());
  nlohmann::json manifest;
  std::size_t vocab_size = 0;
  Eigen::Index dim = 0;
  int window = 0;
  bool mixer = false;
  std::int64_t steps = 0;
  try {
    manifest = nlohmann::json::parse(text);
    vocab_size = manifest.at("vocab_size").get<std::size_t>();
    dim = manifest.at("dim").get<Eigen::Index>();
    window = manifest.at("window").get<int>();
    mixer = manifest.at("mixer").get<bool>();
    steps = manifest.at("adam_steps").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint manifest: ") + e.what());
  }
  if (vocab_size < 1 || dim < 1) throw FormatError("bad checkpoint shape");

  std::vector<std::string> vocabulary;
  for (std::size_t i = 0; i < vocab_size; ++i) {
    std::string unit(r.uint(4), '\0');
    r.bytes(unit.data(), unit.size());
    vocabulary.push_back(std::move(unit));
  }
  if (vocabulary.front() != EmbeddingModel::kUnknown) {
    throw FormatError("checkpoint vocabulary does not start with the unknown unit");
  }
  vocabulary.erase(vocabulary.begin());

  const auto rows = static_cast<Eigen::Index>(vocab_size);
  Matrix table = r.tensor(rows, dim);
  Matrix mix = mixer ? r.tensor(dim, dim) : Matrix();
  AdamMoments table_moments{r.tensor(rows, dim), r.tensor(rows, dim)};
  AdamMoments mixer_moments;
  if (mixer) mixer_moments = {r.tensor(dim, dim), r.tensor(dim, dim)};
  if (!r.at_end()) throw FormatError("trailing bytes in checkpoint");

  try {
    return Checkpoint{
        EmbeddingModel(std::move(vocabulary), std::move(table), std::move(mix),
                       window),
        AdamOptimizer(std::move(table_moments), std::move(mixer_moments), steps)};
  } catch (const InputError& e) {
    throw FormatError(std::string("invalid checkpoint: ") + e.what());
  }
}

}  // namespace otalign
