// Copyright 2026 The matchlearn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Symbolic algebra of Majorana monomials and their Jordan-Wigner images.
//
// A monomial is phase * gamma_{s1} gamma_{s2} ... gamma_{sm} with
// s1 < s2 < ... < sm, indices 1-based in [1, 2n]. Products are computed by
// counting the transpositions needed to sort the concatenated index list;
// no matrices are involved.

#pragma once

#include <array>
#include <bit>
#include <complex>
#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "matchlearn/common.hpp"

namespace matchlearn {

/// A unit phase i^k, k in {0, 1, 2, 3}.
class Phase {
 public:
  constexpr Phase() = default;
  constexpr explicit Phase(int power) : k_(((power % 4) + 4) % 4) {}

  static constexpr Phase one() { return Phase(0); }
  static constexpr Phase i() { return Phase(1); }
  static constexpr Phase minus_one() { return Phase(2); }
  static constexpr Phase minus_i() { return Phase(3); }

  constexpr int power() const { return k_; }
  constexpr Phase conj() const { return Phase(-k_); }
  constexpr bool is_real() const { return k_ % 2 == 0; }

  std::complex<double> value() const {
    static constexpr std::array<std::pair<double, double>, 4> kValues{
        {{1, 0}, {0, 1}, {-1, 0}, {0, -1}}};
    return {kValues[k_].first, kValues[k_].second};
  }

  std::string str() const {
    static constexpr std::array<const char*, 4> kNames{"+1", "+i", "-1", "-i"};
    return kNames[k_];
  }

  static Phase parse(const std::string& s) {
    if (s == "+1" || s == "1") return one();
    if (s == "-1") return minus_one();
    if (s == "+i" || s == "i") return i();
    if (s == "-i") return minus_i();
    throw std::invalid_argument("unrecognized phase '" + s + "'");
  }

  friend constexpr Phase operator*(Phase a, Phase b) {
    return Phase(a.k_ + b.k_);
  }
  friend constexpr bool operator==(Phase a, Phase b) { return a.k_ == b.k_; }

 private:
  int k_ = 0;
};

/// (m(m-1)/2) mod 2: the reversal parity of an m-element product.
inline constexpr int reversal_parity(int m) { return (m * (m - 1) / 2) % 2; }

class MajoranaMonomial {
 public:
  MajoranaMonomial(int n_modes, IndexSet support, Phase phase = Phase::one())
      : n_(n_modes), mask_(0), phase_(phase) {
    check_mode_count(n_modes);
    check_index_set(support, n_modes);
    mask_ = mask_of(support);
  }

  static MajoranaMonomial from_mask(int n_modes, ModeMask mask,
                                    Phase phase = Phase::one()) {
    check_mode_count(n_modes);
    if ((mask & ~low_bits(2 * n_modes)) != 0)
      throw std::invalid_argument("mask has bits outside [1, 2n]");
    MajoranaMonomial m(n_modes, {}, phase);
    m.mask_ = mask;
    return m;
  }

  static MajoranaMonomial identity(int n_modes) {
    return MajoranaMonomial(n_modes, {});
  }

  static MajoranaMonomial gamma(int n_modes, int mu) {
    return MajoranaMonomial(n_modes, {mu});
  }

  int n_modes() const { return n_; }
  ModeMask mask() const { return mask_; }
  IndexSet support() const { return set_of(mask_); }
  int degree() const { return std::popcount(mask_); }
  Phase phase() const { return phase_; }
  bool is_identity() const { return mask_ == 0 && phase_ == Phase::one(); }

  MajoranaMonomial with_phase(Phase p) const {
    MajoranaMonomial m = *this;
    m.phase_ = p;
    return m;
  }

  friend bool operator==(const MajoranaMonomial& a, const MajoranaMonomial& b) {
    return a.n_ == b.n_ && a.mask_ == b.mask_ && a.phase_ == b.phase_;
  }

 private:
  int n_;
  ModeMask mask_;
  Phase phase_;
};

/// Parity of the number of pairs (x in a, y in b) with x > y. This is the
/// transposition count that sorts the concatenation a ++ b.
inline int reorder_parity(ModeMask a, ModeMask b) {
  int parity = 0;
  while (b != 0) {
    int y = std::countr_zero(b) + 1;  // 1-based index
    parity ^= std::popcount(a & ~low_bits(y)) & 1;
    b &= b - 1;
  }
  return parity;
}

inline MajoranaMonomial monomial_mul(const MajoranaMonomial& a,
                                     const MajoranaMonomial& b) {
  if (a.n_modes() != b.n_modes())
    throw std::invalid_argument("monomial_mul: mode-count mismatch");
  Phase p = a.phase() * b.phase();
  if (reorder_parity(a.mask(), b.mask())) p = p * Phase::minus_one();
  return MajoranaMonomial::from_mask(a.n_modes(), a.mask() ^ b.mask(), p);
}

inline MajoranaMonomial operator*(const MajoranaMonomial& a,
                                  const MajoranaMonomial& b) {
  return monomial_mul(a, b);
}

inline MajoranaMonomial monomial_adjoint(const MajoranaMonomial& a) {
  Phase p = a.phase().conj();
  if (reversal_parity(a.degree())) p = p * Phase::minus_one();
  return a.with_phase(p);
}

inline bool monomial_trace_is_zero(const MajoranaMonomial& a) {
  return a.mask() != 0;
}

/// Sign s in gamma_R gamma_mu gamma_R^dagger = s gamma_mu.
inline int conjugate_sign(const IndexSet& r, int mu) {
  int exponent = static_cast<int>(r.size()) - (contains(r, mu) ? 1 : 0);
  return exponent % 2 == 0 ? 1 : -1;
}

/// Phase i^{p(m)} that makes gamma_S Hermitian, p(m) = m(m-1)/2 mod 2.
inline Phase hermitian_phase(int degree) {
  return reversal_parity(degree) ? Phase::i() : Phase::one();
}

/// gamma-bar_S = i^{p(|S|)} gamma_S; Hermitian and squares to the identity.
class HermitianMonomial {
 public:
  HermitianMonomial(int n_modes, IndexSet support)
      : m_(n_modes, support, hermitian_phase(static_cast<int>(support.size()))) {}

  static HermitianMonomial from_mask(int n_modes, ModeMask mask) {
    return HermitianMonomial(n_modes, set_of(mask));
  }

  const MajoranaMonomial& monomial() const { return m_; }

 private:
  MajoranaMonomial m_;
};

// ---------------------------------------------------------------------------
// Pauli strings

enum class Pauli : std::uint8_t { I = 0, X = 1, Y = 2, Z = 3 };

/// Single-qubit product a*b = i^k c.
inline std::pair<Pauli, Phase> pauli_mul(Pauli a, Pauli b) {
  auto ia = static_cast<int>(a), ib = static_cast<int>(b);
  if (ia == 0) return {b, Phase::one()};
  if (ib == 0) return {a, Phase::one()};
  if (ia == ib) return {Pauli::I, Phase::one()};
  auto c = static_cast<Pauli>(6 - ia - ib);
  bool cyclic = (ia == 1 && ib == 2) || (ia == 2 && ib == 3) ||
                (ia == 3 && ib == 1);
  return {c, cyclic ? Phase::i() : Phase::minus_i()};
}

class PauliString {
 public:
  explicit PauliString(int n_qubits)
      : letters_(static_cast<std::size_t>(n_qubits), Pauli::I) {
    check_mode_count(n_qubits);
  }
  PauliString(std::vector<Pauli> letters, Phase phase)
      : letters_(std::move(letters)), phase_(phase) {
    check_mode_count(static_cast<int>(letters_.size()));
  }

  int n_qubits() const { return static_cast<int>(letters_.size()); }
  const std::vector<Pauli>& letters() const { return letters_; }
  /// Letter on qubit q (1-based).
  Pauli letter(int q) const { return letters_.at(static_cast<std::size_t>(q - 1)); }
  Phase phase() const { return phase_; }

  friend PauliString operator*(const PauliString& a, const PauliString& b) {
    if (a.n_qubits() != b.n_qubits())
      throw std::invalid_argument("Pauli product: qubit-count mismatch");
    std::vector<Pauli> out(a.letters_.size());
    Phase p = a.phase_ * b.phase_;
    for (std::size_t q = 0; q < out.size(); ++q) {
      auto [c, ph] = pauli_mul(a.letters_[q], b.letters_[q]);
      out[q] = c;
      p = p * ph;
    }
    return PauliString(std::move(out), p);
  }

  friend bool operator==(const PauliString& a, const PauliString& b) {
    return a.letters_ == b.letters_ && a.phase_ == b.phase_;
  }

 private:
  std::vector<Pauli> letters_;
  Phase phase_ = Phase::one();
};

/// Jordan-Wigner image of a single Majorana operator:
/// gamma_{2l-1} = Z_1..Z_{l-1} X_l and gamma_{2l} = Z_1..Z_{l-1} Y_l.
inline PauliString jordan_wigner_gamma(int n_modes, int mu) {
  if (mu < 1 || mu > 2 * n_modes)
    throw std::invalid_argument("Majorana index out of range");
  std::vector<Pauli> letters(static_cast<std::size_t>(n_modes), Pauli::I);
  int l = (mu + 1) / 2;
  for (int q = 1; q < l; ++q) letters[static_cast<std::size_t>(q - 1)] = Pauli::Z;
  letters[static_cast<std::size_t>(l - 1)] = (mu % 2 == 1) ? Pauli::X : Pauli::Y;
  return PauliString(std::move(letters), Phase::one());
}

inline PauliString jordan_wigner(const MajoranaMonomial& a) {
  PauliString acc(a.n_modes());
  for (int mu : a.support()) acc = acc * jordan_wigner_gamma(a.n_modes(), mu);
  return PauliString(acc.letters(), acc.phase() * a.phase());
}

// ---------------------------------------------------------------------------
// Text and JSON forms

namespace detail {
inline std::string phase_prefix(Phase p) {
  switch (p.power()) {
    case 0: return "+";
    case 1: return "+i·";
    case 2: return "-";
    default: return "-i·";
  }
}

inline std::string subscript(int v) {
  std::string digits = std::to_string(v), out;
  for (char c : digits) {
    out += "\xE2\x82";
    out += static_cast<char>(0x80 + (c - '0'));
  }
  return out;
}
}  // namespace detail

/// Renders as e.g. "+γ{1,4,5}" or "-i·γ{1,2}".
inline std::string to_string(const MajoranaMonomial& a) {
  std::string s = detail::phase_prefix(a.phase()) + "γ{";
  bool first = true;
  for (int mu : a.support()) {
    if (!first) s += ",";
    s += std::to_string(mu);
    first = false;
  }
  return s + "}";
}

/// Renders as e.g. "+i·Z₁X₂"; the all-identity string prints as "+I".
inline std::string to_string(const PauliString& p) {
  std::string s = detail::phase_prefix(p.phase());
  bool any = false;
  for (int q = 1; q <= p.n_qubits(); ++q) {
    Pauli l = p.letter(q);
    if (l == Pauli::I) continue;
    s += "IXYZ"[static_cast<int>(l)];
    s += detail::subscript(q);
    any = true;
  }
  return any ? s : s + "I";
}

inline std::ostream& operator<<(std::ostream& os, const MajoranaMonomial& a) {
  return os << to_string(a);
}
inline std::ostream& operator<<(std::ostream& os, const PauliString& p) {
  return os << to_string(p);
}

inline void to_json(nlohmann::json& j, const MajoranaMonomial& a) {
  j = nlohmann::json{{"phase", a.phase().str()},
                     {"support", a.support()},
                     {"n_modes", a.n_modes()}};
}

inline MajoranaMonomial monomial_from_json(const nlohmann::json& j) {
  return MajoranaMonomial(j.at("n_modes").get<int>(),
                          j.at("support").get<IndexSet>(),
                          Phase::parse(j.at("phase").get<std::string>()));
}

}  // namespace matchlearn
