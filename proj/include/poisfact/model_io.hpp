#pragma once

// Binary model container, all fields little-endian:
//
//   magic     8 bytes  "PFMODEL\0"
//   version   u32      (1)
//   m, n, k   u64 x 3
//   reg       u8       0 = l2, 1 = l1
//   solver    u8       0 = proxgrad, 1 = cg
//   reserved  u16      0
//   lambda    f64
//   seed      u64
//   payload   f64 x (m*k + n*k)   A then B, row-major
//   checksum  u64      FNV-1a over the payload bytes

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "poisfact/errors.hpp"
#include "poisfact/sparse_data.hpp"
#include "poisfact/trainer.hpp"

namespace poisfact {

inline constexpr std::array<char, 8> kModelMagic{'P', 'F', 'M', 'O', 'D', 'E', 'L', '\0'};
inline constexpr std::uint32_t kModelVersion = 1;

struct ModelHeader {
  std::uint32_t version = kModelVersion;
  std::uint64_t users = 0;
  std::uint64_t items = 0;
  std::uint64_t k = 0;
  RegKind reg = RegKind::L2;
  SolverMethod solver = SolverMethod::ProxGrad;
  double lambda = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const ModelHeader&) const = default;
};

inline ModelHeader make_header(const FactorModel& model, const TrainConfig& config) {
  return {kModelVersion, model.users(), model.items(), model.k(), config.reg,
          config.solver.method, config.lambda, config.seed};
}

namespace detail {

class Fnv1a {
 public:
  void update(const unsigned char* p, std::size_t n) noexcept {
    for (std::size_t i = 0; i < n; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001b3ULL;
    }
  }
  std::uint64_t value() const noexcept { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

template <typename U>
void put_le(std::ostream& out, U value, Fnv1a* sum = nullptr) {
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(value >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), sizeof(U));
  if (sum) sum->update(buf, sizeof(U));
}

template <typename U>
U get_le(std::istream& in, Fnv1a* sum = nullptr) {
  unsigned char buf[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(U)))
    throw ModelFormatError("model file truncated");
  if (sum) sum->update(buf, sizeof(U));
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(buf[i]) << (8 * i);
  return value;
}

}  // namespace detail

/// Refuses to write non-finite factors.
inline void save_model(std::ostream& out, const FactorModel& model, const ModelHeader& header) {
  if (header.users != model.users() || header.items != model.items() || header.k != model.k() ||
      model.B.cols() != model.k())
    throw DataMismatch("model header does not match factor dimensions");
  if (!all_finite(model.A.values()) || !all_finite(model.B.values()))
    throw NumericFailure("refusing to save a model with non-finite factors");

  out.write(kModelMagic.data(), kModelMagic.size());
  detail::put_le<std::uint32_t>(out, header.version);
  detail::put_le<std::uint64_t>(out, header.users);
  detail::put_le<std::uint64_t>(out, header.items);
  detail::put_le<std::uint64_t>(out, header.k);
  detail::put_le<std::uint8_t>(out, header.reg == RegKind::L2 ? 0 : 1);
  detail::put_le<std::uint8_t>(out, header.solver == SolverMethod::ProxGrad ? 0 : 1);
  detail::put_le<std::uint16_t>(out, 0);
  detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(header.lambda));
  detail::put_le<std::uint64_t>(out, header.seed);

  detail::Fnv1a sum;
  for (const FactorMatrix* m : {&model.A, &model.B})
    for (double v : m->values()) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v), &sum);
  detail::put_le<std::uint64_t>(out, sum.value());
  if (!out) throw IoError("failed writing model");
}

struct LoadedModel {
  ModelHeader header;
  FactorModel model;
};

inline LoadedModel load_model(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kModelMagic)
    throw ModelFormatError("not a model file (bad magic)");

  LoadedModel loaded;
  ModelHeader& h = loaded.header;
  h.version = detail::get_le<std::uint32_t>(in);
  if (h.version != kModelVersion)
    throw ModelFormatError("unsupported model version " + std::to_string(h.version));
  h.users = detail::get_le<std::uint64_t>(in);
  h.items = detail::get_le<std::uint64_t>(in);
  h.k = detail::get_le<std::uint64_t>(in);
  const auto reg = detail::get_le<std::uint8_t>(in);
  const auto solver = detail::get_le<std::uint8_t>(in);
  detail::get_le<std::uint16_t>(in);
  if (reg > 1 || solver > 1) throw ModelFormatError("bad regularization or solver tag");
  h.reg = reg == 0 ? RegKind::L2 : RegKind::L1;
  h.solver = solver == 0 ? SolverMethod::ProxGrad : SolverMethod::ConjGrad;
  h.lambda = std::bit_cast<double>(detail::get_le<std::uint64_t>(in));
  h.seed = detail::get_le<std::uint64_t>(in);

  constexpr std::uint64_t kMaxEntries = std::uint64_t{1} << 40;
  if (h.k == 0 || h.users == 0 || h.items == 0 || h.k > kMaxEntries / (h.users + h.items))
    throw ModelFormatError("implausible model dimensions");

  detail::Fnv1a sum;
  auto read_matrix = [&](std::uint64_t rows) {
    std::vector<double> data(rows * h.k);
    for (double& v : data) v = std::bit_cast<double>(detail::get_le<std::uint64_t>(in, &sum));
    return FactorMatrix(rows, h.k, std::move(data));
  };
  loaded.model.A = read_matrix(h.users);
  loaded.model.B = read_matrix(h.items);
  const auto stored = detail::get_le<std::uint64_t>(in);
  if (stored != sum.value()) throw ModelFormatError("model checksum mismatch");
  if (in.peek() != std::char_traits<char>::eof()) throw ModelFormatError("trailing bytes after model");
  return loaded;
}

/// Human-readable dump: one line per row, A rows prefixed "user", B rows "item".
inline void write_model_text(std::ostream& out, const FactorModel& model, const IdMap* ids = nullptr,
                             char delimiter = '\t') {
  auto dump = [&](const FactorMatrix& m, const char* kind, const IdTable* table) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      out << kind << delimiter;
      if (table && r < table->size())
        out << table->token(static_cast<index_t>(r));
      else
        out << r;
      for (double v : m.row(r)) out << delimiter << detail::format_real(v);
      out << '\n';
    }
  };
  dump(model.A, "user", ids ? &ids->users : nullptr);
  dump(model.B, "item", ids ? &ids->items : nullptr);
}

}  // namespace poisfact
