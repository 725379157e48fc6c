// LDPC codes from alist files: systematic encoding via GF(2) elimination and
// normalized min-sum decoding.
//
// Decoder LLR convention: LLR > 0 means the coded bit is more likely 0.

#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "qrx/tensor.hpp"

namespace qrx {

struct LdpcError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Sparse parity-check matrix, rows as sorted column-index lists.
struct ParityCheck {
    int n = 0;  // columns / codeword length
    int m = 0;  // rows / checks
    std::vector<std::vector<int>> rows;
};

namespace detail {

struct TokenReader {
    std::istream& is;
    std::string source;
    int line = 0;
    std::istringstream cur;

    explicit TokenReader(std::istream& s, std::string name) : is(s), source(std::move(name)) {}

    bool next_int(long& out) {
        while (!(cur >> out)) {
            std::string text;
            if (!std::getline(is, text)) return false;
            ++line;
            cur = std::istringstream(text);
        }
        return true;
    }

    long require_int(const char* what) {
        long v;
        if (!next_int(v))
            throw LdpcError(source + ": unexpected end of file while reading " + std::string(what));
        return v;
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw LdpcError(source + ":" + std::to_string(line) + ": " + msg);
    }
};

} // namespace detail

// MacKay alist format. Degree lists are cross-checked against both the
// per-column and per-row index blocks; inconsistencies are reported with the
// line they were detected on.
inline ParityCheck parse_alist(std::istream& is, const std::string& source_name = "<alist>") {
    detail::TokenReader tr(is, source_name);
    const long n = tr.require_int("column count");
    const long m = tr.require_int("row count");
    if (n <= 0 || m <= 0) tr.fail("matrix dimensions must be positive");
    const long max_col = tr.require_int("max column weight");
    const long max_row = tr.require_int("max row weight");

    std::vector<long> col_w(n), row_w(m);
    for (long j = 0; j < n; ++j) {
        col_w[j] = tr.require_int("column weight");
        if (col_w[j] < 0 || col_w[j] > max_col)
            tr.fail("column weight " + std::to_string(col_w[j]) + " outside [0," +
                    std::to_string(max_col) + "] for column " + std::to_string(j + 1));
    }
    for (long i = 0; i < m; ++i) {
        row_w[i] = tr.require_int("row weight");
        if (row_w[i] < 0 || row_w[i] > max_row)
            tr.fail("row weight " + std::to_string(row_w[i]) + " outside [0," +
                    std::to_string(max_row) + "] for row " + std::to_string(i + 1));
    }

    ParityCheck h;
    h.n = static_cast<int>(n);
    h.m = static_cast<int>(m);
    h.rows.assign(m, {});

    // Column block: row indices per column, zero-padded to max_col.
    std::vector<std::vector<int>> cols(n);
    for (long j = 0; j < n; ++j) {
        for (long e = 0; e < max_col; ++e) {
            const long r = tr.require_int("column entry");
            if (r == 0) {
                if (e < col_w[j]) tr.fail("column " + std::to_string(j + 1) + " has fewer entries than its declared weight");
                continue;
            }
            if (e >= col_w[j]) tr.fail("column " + std::to_string(j + 1) + " has more entries than its declared weight");
            if (r < 1 || r > m) tr.fail("row index " + std::to_string(r) + " out of range in column " + std::to_string(j + 1));
            cols[j].push_back(static_cast<int>(r - 1));
        }
    }

    // Row block, cross-checked against the column block.
    for (long i = 0; i < m; ++i) {
        for (long e = 0; e < max_row; ++e) {
            const long c = tr.require_int("row entry");
            if (c == 0) {
                if (e < row_w[i]) tr.fail("row " + std::to_string(i + 1) + " has fewer entries than its declared weight");
                continue;
            }
            if (e >= row_w[i]) tr.fail("row " + std::to_string(i + 1) + " has more entries than its declared weight");
            if (c < 1 || c > n) tr.fail("column index " + std::to_string(c) + " out of range in row " + std::to_string(i + 1));
            h.rows[i].push_back(static_cast<int>(c - 1));
        }
    }

    // Consistency: the two blocks must describe the same matrix.
    std::vector<std::vector<int>> from_cols(m);
    for (long j = 0; j < n; ++j)
        for (int r : cols[j]) from_cols[r].push_back(static_cast<int>(j));
    for (long i = 0; i < m; ++i) {
        auto a = from_cols[i];
        auto b = h.rows[i];
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        if (a != b)
            tr.fail("row " + std::to_string(i + 1) +
                    " disagrees between the column and row index blocks");
        h.rows[i] = std::move(b);
    }
    return h;
}

inline ParityCheck load_alist(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FileError("cannot open alist file: " + path);
    return parse_alist(f, path);
}

inline void write_alist(std::ostream& os, const ParityCheck& h) {
    std::vector<std::vector<int>> cols(h.n);
    for (int i = 0; i < h.m; ++i)
        for (int j : h.rows[i]) cols[j].push_back(i);
    std::size_t max_col = 0, max_row = 0;
    for (const auto& c : cols) max_col = std::max(max_col, c.size());
    for (const auto& r : h.rows) max_row = std::max(max_row, r.size());

    os << h.n << " " << h.m << "\n" << max_col << " " << max_row << "\n";
    for (const auto& c : cols) os << c.size() << " ";
    os << "\n";
    for (const auto& r : h.rows) os << r.size() << " ";
    os << "\n";
    for (const auto& c : cols) {
        for (std::size_t e = 0; e < max_col; ++e) os << (e < c.size() ? c[e] + 1 : 0) << " ";
        os << "\n";
    }
    for (const auto& r : h.rows) {
        for (std::size_t e = 0; e < max_row; ++e) os << (e < r.size() ? r[e] + 1 : 0) << " ";
        os << "\n";
    }
}

struct DecodeResult {
    std::vector<std::uint8_t> info_bits;
    std::vector<std::uint8_t> codeword;
    bool converged = false;
    int iterations = 0;
};

class LdpcCode {
public:
    // Preprocesses H into systematic form by GF(2) elimination. Pivots are
    // chosen from the rightmost columns so info bits keep the leading
    // positions when the tail of H is invertible.
    explicit LdpcCode(ParityCheck h) : h_(std::move(h)) {
        build_systematic_();
        build_adjacency_();
    }

    static LdpcCode from_alist(const std::string& path) { return LdpcCode(load_alist(path)); }

    int n() const { return h_.n; }
    int k() const { return static_cast<int>(info_pos_.size()); }
    int m() const { return h_.m; }
    double rate() const { return static_cast<double>(k()) / n(); }
    const ParityCheck& parity_check() const { return h_; }
    const std::vector<int>& info_positions() const { return info_pos_; }

    std::vector<std::uint8_t> encode(std::span<const std::uint8_t> info) const {
        if (static_cast<int>(info.size()) != k())
            throw LdpcError("encode: expected " + std::to_string(k()) + " info bits, got " +
                            std::to_string(info.size()));
        std::vector<std::uint8_t> cw(h_.n, 0);
        for (int j = 0; j < k(); ++j) cw[info_pos_[j]] = info[j] & 1;
        const std::size_t words = (info_pos_.size() + 63) / 64;
        std::vector<std::uint64_t> u(words, 0);
        for (int j = 0; j < k(); ++j)
            if (info[j] & 1) u[j / 64] |= std::uint64_t(1) << (j % 64);
        for (int r = 0; r < h_.m; ++r) {
            std::uint64_t acc = 0;
            const std::uint64_t* row = gen_.data() + static_cast<std::size_t>(r) * words;
            for (std::size_t w = 0; w < words; ++w) acc ^= row[w] & u[w];
            cw[parity_pos_[r]] = static_cast<std::uint8_t>(__builtin_popcountll(acc) & 1);
        }
        return cw;
    }

    bool syndrome_ok(std::span<const std::uint8_t> cw) const {
        for (const auto& row : h_.rows) {
            int parity = 0;
            for (int j : row) parity ^= cw[j] & 1;
            if (parity) return false;
        }
        return true;
    }

    // Normalized min-sum (default factor 0.75), flooding schedule, early exit
    // on zero syndrome.
    DecodeResult decode(std::span<const double> llrs, int max_iters = 25,
                        double norm_factor = 0.75) const {
        if (static_cast<int>(llrs.size()) != h_.n)
            throw LdpcError("decode: expected " + std::to_string(h_.n) + " LLRs, got " +
                            std::to_string(llrs.size()));
        const std::size_t n_edges = edge_var_.size();
        std::vector<double> r_msg(n_edges, 0.0);  // check -> var
        std::vector<double> q_scratch(n_edges, 0.0);
        std::vector<double> posterior(llrs.begin(), llrs.end());

        DecodeResult out;
        out.codeword.assign(h_.n, 0);
        auto harden = [&] {
            for (int v = 0; v < h_.n; ++v) out.codeword[v] = posterior[v] < 0.0 ? 1 : 0;
        };
        harden();
        if (syndrome_ok(out.codeword)) {
            out.converged = true;
            out.iterations = 0;
        } else {
            for (int iter = 1; iter <= max_iters; ++iter) {
                for (std::size_t c = 0; c < check_edge_begin_.size() - 1; ++c) {
                    const std::size_t lo = check_edge_begin_[c], hi = check_edge_begin_[c + 1];
                    double min1 = std::numeric_limits<double>::infinity();
                    double min2 = std::numeric_limits<double>::infinity();
                    std::size_t arg1 = lo;
                    int sign_prod = 1;
                    for (std::size_t e = lo; e < hi; ++e) {
                        const double q = posterior[edge_var_[e]] - r_msg[e];
                        q_scratch[e] = q;
                        const double a = std::abs(q);
                        if (q < 0) sign_prod = -sign_prod;
                        if (a < min1) {
                            min2 = min1;
                            min1 = a;
                            arg1 = e;
                        } else if (a < min2) {
                            min2 = a;
                        }
                    }
                    for (std::size_t e = lo; e < hi; ++e) {
                        const double q = q_scratch[e];
                        const double mag = (e == arg1 ? min2 : min1) * norm_factor;
                        const double sign = (sign_prod * (q < 0 ? -1 : 1)) < 0 ? -1.0 : 1.0;
                        const double r_new = sign * mag;
                        posterior[edge_var_[e]] += r_new - r_msg[e];
                        r_msg[e] = r_new;
                    }
                }
                harden();
                out.iterations = iter;
                if (syndrome_ok(out.codeword)) {
                    out.converged = true;
                    break;
                }
            }
        }
        out.info_bits.resize(info_pos_.size());
        for (std::size_t j = 0; j < info_pos_.size(); ++j)
            out.info_bits[j] = out.codeword[info_pos_[j]];
        return out;
    }

private:
    void build_systematic_() {
        const int n = h_.n, m = h_.m;
        const std::size_t words = (static_cast<std::size_t>(n) + 63) / 64;
        std::vector<std::vector<std::uint64_t>> rows(m, std::vector<std::uint64_t>(words, 0));
        for (int i = 0; i < m; ++i)
            for (int j : h_.rows[i]) rows[i][j / 64] ^= std::uint64_t(1) << (j % 64);

        auto get = [&](int r, int c) -> bool {
            return (rows[r][c / 64] >> (c % 64)) & 1;
        };

        std::vector<int> pivot_col(m, -1);
        std::vector<bool> row_used(m, false);
        int n_pivots = 0;
        for (int c = n - 1; c >= 0 && n_pivots < m; --c) {
            int pivot = -1;
            for (int r = 0; r < m; ++r)
                if (!row_used[r] && get(r, c)) {
                    pivot = r;
                    break;
                }
            if (pivot < 0) continue;
            row_used[pivot] = true;
            pivot_col[pivot] = c;
            ++n_pivots;
            for (int r = 0; r < m; ++r)
                if (r != pivot && get(r, c))
                    for (std::size_t w = 0; w < words; ++w) rows[r][w] ^= rows[pivot][w];
        }
        if (n_pivots < m)
            throw LdpcError("parity-check matrix is rank deficient (" + std::to_string(n_pivots) +
                            " of " + std::to_string(m) + " pivots)");

        std::vector<bool> is_parity(n, false);
        parity_pos_.clear();
        for (int r = 0; r < m; ++r) {
            parity_pos_.push_back(pivot_col[r]);
            is_parity[pivot_col[r]] = true;
        }
        info_pos_.clear();
        for (int c = 0; c < n; ++c)
            if (!is_parity[c]) info_pos_.push_back(c);

        // Generator rows over the info positions: p_r = sum_j A[r][j] u_j.
        const std::size_t kwords = (info_pos_.size() + 63) / 64;
        gen_.assign(static_cast<std::size_t>(m) * kwords, 0);
        for (int r = 0; r < m; ++r)
            for (std::size_t j = 0; j < info_pos_.size(); ++j)
                if (get(r, info_pos_[j]))
                    gen_[static_cast<std::size_t>(r) * kwords + j / 64] |=
                        std::uint64_t(1) << (j % 64);
    }

    void build_adjacency_() {
        check_edge_begin_.assign(1, 0);
        for (const auto& row : h_.rows) {
            for (int v : row) edge_var_.push_back(v);
            check_edge_begin_.push_back(edge_var_.size());
        }
    }

    ParityCheck h_;
    std::vector<int> info_pos_;
    std::vector<int> parity_pos_;
    std::vector<std::uint64_t> gen_;
    std::vector<int> edge_var_;
    std::vector<std::size_t> check_edge_begin_;
};

} // namespace qrx
