#include "luq/io.hpp"

#include "luq/error.hpp"

#include <zlib.h>

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace luq {

namespace {

constexpr char kMatrixMagic[4] = {'L', 'U', 'Q', '1'};
constexpr char kModelMagic[4] = {'L', 'U', 'Q', 'M'};

class ByteWriter {
public:
    template <typename T>
    void put(T v) {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                     std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                        std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
        auto u = std::bit_cast<U>(v);
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            out_.push_back(static_cast<char>(u & 0xffu));
            if constexpr (sizeof(T) > 1) u = static_cast<U>(u >> 8);
        }
    }
    void u8(std::uint8_t v) { put(v); }
    void u16(std::uint16_t v) { put(v); }
    void u32(std::size_t v) {
        if (v > std::numeric_limits<std::uint32_t>::max()) fail(Errc::Format, "value too large for a u32 field");
        put(static_cast<std::uint32_t>(v));
    }
    void u64(std::uint64_t v) { put(v); }
    void i32(int v) { put(static_cast<std::int32_t>(v)); }
    void f64(double v) { put(v); }
    void raw(std::string_view s) { out_.append(s); }

    void vec(std::span<const double> v) {
        u32(v.size());
        for (double x : v) f64(x);
    }
    void mat(const Matrix& m) {
        u32(m.rows());
        u32(m.cols());
        for (double x : m.data()) f64(x);
    }
    void indices(const std::vector<std::size_t>& v) {
        u32(v.size());
        for (std::size_t x : v) u32(x);
    }

    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class ByteReader {
public:
    ByteReader(std::string_view bytes, std::string source, std::size_t base = 0)
        : bytes_(bytes), source_(std::move(source)), base_(base) {}

    template <typename U>
    U get_unsigned() {
        need(sizeof(U));
        U u = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            u = static_cast<U>(u | (static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i)));
        }
        pos_ += sizeof(U);
        return u;
    }
    std::uint8_t u8() { return get_unsigned<std::uint8_t>(); }
    std::uint16_t u16() { return get_unsigned<std::uint16_t>(); }
    std::uint32_t u32() { return get_unsigned<std::uint32_t>(); }
    std::uint64_t u64() { return get_unsigned<std::uint64_t>(); }
    int i32() { return static_cast<int>(std::bit_cast<std::int32_t>(u32())); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string_view raw(std::size_t n) {
        need(n);
        const auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    Vector vec() {
        const std::size_t n = u32();
        need(8 * n);
        Vector v(n);
        for (double& x : v) x = f64();
        return v;
    }
    Matrix mat() {
        const std::size_t r = u32();
        const std::size_t c = u32();
        need(8 * r * c);
        Matrix m(r, c);
        for (double& x : m.data()) x = f64();
        return m;
    }
    std::vector<std::size_t> indices() {
        const std::size_t n = u32();
        need(4 * n);
        std::vector<std::size_t> v(n);
        for (auto& x : v) x = u32();
        return v;
    }

    std::size_t offset() const noexcept { return base_ + pos_; }
    bool done() const noexcept { return pos_ == bytes_.size(); }
    const std::string& source() const noexcept { return source_; }

    [[noreturn]] void corrupt(const std::string& what) const {
        fail(Errc::Format, source_ + ": " + what + " at byte offset " + std::to_string(offset()));
    }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) {
            fail(Errc::Format, source_ + ": truncated at byte offset " + std::to_string(base_ + bytes_.size()) +
                                   " (needed " + std::to_string(n) + " bytes at offset " +
                                   std::to_string(base_ + pos_) + ")");
        }
    }

    std::string_view bytes_;
    std::string source_;
    std::size_t base_ = 0;
    std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::string_view payload) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed large payloads in chunks
    std::size_t pos = 0;
    while (pos < payload.size()) {
        const std::size_t chunk = std::min<std::size_t>(payload.size() - pos, 1u << 30);
        crc = crc32(crc, reinterpret_cast<const Bytef*>(payload.data() + pos), static_cast<uInt>(chunk));
        pos += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

void put_mlp(ByteWriter& w, const Mlp& net) {
    w.u32(net.layer_dims.size());
    for (std::size_t d : net.layer_dims) w.u32(d);
    for (std::size_t l = 0; l < net.depth(); ++l) {
        w.mat(net.weights[l]);
        w.vec(net.biases[l]);
    }
}

Mlp get_mlp(ByteReader& r) {
    const std::size_t n = r.u32();
    if (n < 2) r.corrupt("MLP with fewer than 2 layer sizes");
    std::vector<std::size_t> dims(n);
    for (auto& d : dims) d = r.u32();
    Mlp net(dims);
    for (std::size_t l = 0; l < net.depth(); ++l) {
        Matrix w = r.mat();
        Vector b = r.vec();
        if (w.rows() != dims[l] || w.cols() != dims[l + 1] || b.size() != dims[l + 1]) {
            r.corrupt("MLP layer shape disagrees with its declared sizes");
        }
        net.weights[l] = std::move(w);
        net.biases[l] = std::move(b);
    }
    return net;
}

std::string encode_pca(const PcaModel& p) {
    ByteWriter w;
    w.u32(p.input_dim);
    w.u32(p.out_dim);
    w.u8(p.whiten ? 1 : 0);
    w.vec(p.mean);
    w.mat(p.basis);
    w.vec(p.eigenvalues);
    return w.take();
}

PcaModel decode_pca(ByteReader& r) {
    PcaModel p;
    p.input_dim = r.u32();
    p.out_dim = r.u32();
    p.whiten = r.u8() != 0;
    p.mean = r.vec();
    p.basis = r.mat();
    p.eigenvalues = r.vec();
    if (p.mean.size() != p.input_dim || p.basis.rows() != p.input_dim || p.basis.cols() != p.out_dim ||
        p.eigenvalues.size() != p.out_dim) {
        r.corrupt("PCA section shapes are inconsistent");
    }
    return p;
}

std::string encode_gmms(const ClassConditionalGmm& g) {
    ByteWriter w;
    w.u32(g.dim);
    w.u32(g.classes.size());
    for (int cls : g.classes) {
        const Gmm& m = g.at(cls);
        w.i32(cls);
        w.u32(m.components.size());
        for (const auto& c : m.components) {
            w.f64(c.log_weight);
            w.vec(c.mean);
            w.mat(c.cov_chol.lower());
        }
    }
    return w.take();
}

ClassConditionalGmm decode_gmms(ByteReader& r) {
    ClassConditionalGmm g;
    g.dim = r.u32();
    const std::size_t n_classes = r.u32();
    for (std::size_t k = 0; k < n_classes; ++k) {
        const int cls = r.i32();
        Gmm m;
        m.dim = g.dim;
        const std::size_t n_comp = r.u32();
        if (n_comp == 0) r.corrupt("mixture without components");
        for (std::size_t j = 0; j < n_comp; ++j) {
            GaussianComponent c;
            c.log_weight = r.f64();
            c.mean = r.vec();
            Matrix lower = r.mat();
            if (c.mean.size() != g.dim || lower.rows() != g.dim || lower.cols() != g.dim) {
                r.corrupt("mixture component shape disagrees with the model dimension");
            }
            try {
                c.cov_chol = CholeskyFactor::from_lower(std::move(lower));
            } catch (const Error& e) {
                r.corrupt(std::string("invalid covariance factor (") + e.what() + ")");
            }
            m.components.push_back(std::move(c));
        }
        if (!g.classes.empty() && cls <= g.classes.back()) r.corrupt("class ids not strictly ascending");
        g.classes.push_back(cls);
        g.per_class.emplace(cls, std::move(m));
    }
    return g;
}

std::string encode_flow(const ConditionalFlow& f) {
    ByteWriter w;
    w.u32(f.dim);
    w.u32(f.cond_dim);
    w.vec(f.input_shift);
    w.vec(f.input_scale);
    w.u32(f.layers.size());
    for (const auto& l : f.layers) {
        w.u32(l.dim);
        w.f64(l.scale_clamp);
        w.indices(l.part1);
        w.indices(l.part2);
        put_mlp(w, l.scale_net);
        put_mlp(w, l.translate_net);
        put_mlp(w, l.cond_net);
    }
    return w.take();
}

ConditionalFlow decode_flow(ByteReader& r) {
    ConditionalFlow f;
    f.dim = r.u32();
    f.cond_dim = r.u32();
    f.input_shift = r.vec();
    f.input_scale = r.vec();
    if (f.input_shift.size() != f.dim || f.input_scale.size() != f.dim) {
        r.corrupt("flow standardization length disagrees with the flow dimension");
    }
    const std::size_t n = r.u32();
    for (std::size_t i = 0; i < n; ++i) {
        CouplingLayer l;
        l.dim = r.u32();
        l.scale_clamp = r.f64();
        l.part1 = r.indices();
        l.part2 = r.indices();
        l.scale_net = get_mlp(r);
        l.translate_net = get_mlp(r);
        l.cond_net = get_mlp(r);
        if (l.dim != f.dim || l.part1.size() + l.part2.size() != f.dim || !(l.scale_clamp > 0.0) ||
            l.scale_net.input_dim() != l.part1.size() + l.cond_net.output_dim() ||
            l.scale_net.output_dim() != l.part2.size() || l.translate_net.layer_dims != l.scale_net.layer_dims ||
            l.cond_net.input_dim() != f.cond_dim) {
            r.corrupt("coupling layer " + std::to_string(i) + " has inconsistent shapes");
        }
        for (std::size_t idx : l.part1)
            if (idx >= f.dim) r.corrupt("coupling partition index out of range");
        for (std::size_t idx : l.part2)
            if (idx >= f.dim) r.corrupt("coupling partition index out of range");
        f.layers.push_back(std::move(l));
    }
    return f;
}

std::string encode_grid(const SupportGrid& g) {
    ByteWriter w;
    w.f64(g.spacing);
    w.vec(g.points);
    return w.take();
}

SupportGrid decode_grid(ByteReader& r) {
    SupportGrid g;
    g.spacing = r.f64();
    g.points = r.vec();
    if (g.points.size() < 2) r.corrupt("support grid with fewer than 2 points");
    return g;
}

std::string encode_prior(const OutputPrior& p) {
    ByteWriter w;
    w.u8(static_cast<std::uint8_t>(p.index()));
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, CategoricalPrior>) {
                w.u32(v.classes.size());
                for (int c : v.classes) w.i32(c);
                w.vec(v.log_probs);
            } else if constexpr (std::is_same_v<T, UniformPrior>) {
                w.f64(v.lo);
                w.f64(v.hi);
            } else if constexpr (std::is_same_v<T, BetaPrimePrior>) {
                w.f64(v.alpha);
                w.f64(v.beta);
            } else {
                w.vec(v.edges);
                w.vec(v.log_density);
            }
        },
        p);
    return w.take();
}

OutputPrior decode_prior(ByteReader& r) {
    switch (r.u8()) {
        case 0: {
            CategoricalPrior c;
            const std::size_t n = r.u32();
            for (std::size_t i = 0; i < n; ++i) c.classes.push_back(r.i32());
            c.log_probs = r.vec();
            if (c.log_probs.size() != c.classes.size()) r.corrupt("categorical prior lengths differ");
            return c;
        }
        case 1: {
            UniformPrior u;
            u.lo = r.f64();
            u.hi = r.f64();
            return u;
        }
        case 2: {
            BetaPrimePrior b;
            b.alpha = r.f64();
            b.beta = r.f64();
            return b;
        }
        case 3: {
            HistogramPrior h;
            h.edges = r.vec();
            h.log_density = r.vec();
            if (h.edges.size() != h.log_density.size() + 1) r.corrupt("histogram prior lengths differ");
            return h;
        }
        default:
            r.corrupt("unknown prior kind");
    }
}

}  // namespace

std::string encode_matrix(const Matrix& m) {
    ByteWriter w;
    w.raw(std::string_view(kMatrixMagic, 4));
    w.u16(kMatrixFileVersion);
    w.u32(m.rows());
    w.u32(m.cols());
    for (double v : m.data()) w.f64(v);
    return w.take();
}

Matrix decode_matrix(std::string_view bytes, std::string_view source) {
    ByteReader r(bytes, std::string(source));
    if (r.raw(4) != std::string_view(kMatrixMagic, 4)) {
        fail(Errc::Format, std::string(source) + ": not a matrix file (bad magic)");
    }
    const std::uint16_t version = r.u16();
    if (version != kMatrixFileVersion) {
        fail(Errc::Format, std::string(source) + ": unsupported matrix file version " + std::to_string(version));
    }
    const std::size_t rows = r.u32();
    const std::size_t cols = r.u32();
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            m(i, j) = r.f64();
            if (!std::isfinite(m(i, j))) {
                fail(Errc::Format, std::string(source) + ": non-finite value at row " + std::to_string(i) +
                                       ", column " + std::to_string(j));
            }
        }
    }
    if (!r.done()) r.corrupt("trailing bytes after payload");
    return m;
}

void write_matrix_file(const std::filesystem::path& path, const Matrix& m) { write_file(path, encode_matrix(m)); }

Matrix read_matrix_file(const std::filesystem::path& path) {
    return decode_matrix(read_file(path), path.string());
}

std::string encode_model(const ModelBundle& m) {
    if (!m.gmm && !m.flow) fail(Errc::InvalidArgument, "model needs a density section");
    std::vector<std::pair<const char*, std::string>> sections;
    if (m.pca) sections.emplace_back("PCA_", encode_pca(*m.pca));
    if (m.gmm) sections.emplace_back("GMMS", encode_gmms(*m.gmm));
    if (m.flow) sections.emplace_back("FLOW", encode_flow(*m.flow));
    if (m.grid) sections.emplace_back("GRID", encode_grid(*m.grid));
    sections.emplace_back("PRIO", encode_prior(m.prior));

    ByteWriter w;
    w.raw(std::string_view(kModelMagic, 4));
    w.u16(kModelFileVersion);
    w.u16(static_cast<std::uint16_t>(sections.size()));
    for (const auto& [tag, payload] : sections) {
        w.raw(std::string_view(tag, 4));
        w.u64(payload.size());
        w.put(crc32_of(payload));
        w.raw(payload);
    }
    return w.take();
}

ModelBundle decode_model(std::string_view bytes, std::string_view source) {
    const std::string src(source);
    ByteReader r(bytes, src);
    if (r.raw(4) != std::string_view(kModelMagic, 4)) fail(Errc::Format, src + ": not a model file (bad magic)");
    const std::uint16_t version = r.u16();
    if (version != kModelFileVersion) {
        fail(Errc::Format, src + ": unsupported model file version " + std::to_string(version));
    }
    const std::size_t n = r.u16();
    ModelBundle m;
    bool have_prior = false;
    for (std::size_t i = 0; i < n; ++i) {
        const std::string tag(r.raw(4));
        const std::uint64_t length = r.u64();
        const std::uint32_t crc = r.u32();
        const std::size_t start = r.offset();
        if (length > bytes.size() - start) {
            fail(Errc::Format, src + ": section " + tag + " truncated at byte offset " + std::to_string(bytes.size()) +
                                   " (declares " + std::to_string(length) + " bytes from offset " +
                                   std::to_string(start) + ")");
        }
        const std::string_view payload = r.raw(static_cast<std::size_t>(length));
        if (crc32_of(payload) != crc) {
            fail(Errc::Format, src + ": checksum mismatch in section " + tag + " at byte offset " +
                                   std::to_string(start));
        }
        ByteReader sr(payload, src + " [" + tag + "]", start);
        if (tag == "PCA_") {
            m.pca = decode_pca(sr);
        } else if (tag == "GMMS") {
            m.gmm = decode_gmms(sr);
        } else if (tag == "FLOW") {
            m.flow = decode_flow(sr);
        } else if (tag == "GRID") {
            m.grid = decode_grid(sr);
        } else if (tag == "PRIO") {
            m.prior = decode_prior(sr);
            have_prior = true;
        } else {
            fail(Errc::Format, src + ": unknown section " + tag + " at byte offset " + std::to_string(start - 16));
        }
        if (!sr.done()) sr.corrupt("trailing bytes in section");
    }
    if (!r.done()) r.corrupt("trailing bytes after the last section");
    if (!m.gmm && !m.flow) fail(Errc::Format, src + ": no density section");
    if (!have_prior) fail(Errc::Format, src + ": no prior section");
    return m;
}

void write_model_file(const std::filesystem::path& path, const ModelBundle& m) { write_file(path, encode_model(m)); }

ModelBundle read_model_file(const std::filesystem::path& path) {
    return decode_model(read_file(path), path.string());
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(std::string_view text, std::string_view context) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
    if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (text == "inf") return std::numeric_limits<double>::infinity();
    if (text == "-inf") return -std::numeric_limits<double>::infinity();
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
        fail(Errc::Format, std::string(context) + ": not a number: '" + std::string(text) + "'");
    }
    return v;
}

Vector CsvTable::column(std::string_view name) const {
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (header[j] == name) {
            Vector out(values.rows());
            for (std::size_t r = 0; r < values.rows(); ++r) out[r] = values(r, j);
            return out;
        }
    }
    fail(Errc::Format, "missing column '" + std::string(name) + "'");
}

bool CsvTable::has_column(std::string_view name) const {
    return std::find(header.begin(), header.end(), name) != header.end();
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    const std::string src = path.string();
    CsvTable t;
    std::vector<double> data;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    std::size_t rows = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        const std::string_view line = trim(std::string_view(text).substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_commas(line);
        if (t.header.empty()) {
            for (auto f : fields) t.header.emplace_back(trim(f));
            continue;
        }
        if (fields.size() != t.header.size()) {
            fail(Errc::Format, src + ": line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                                   " fields, header has " + std::to_string(t.header.size()));
        }
        for (std::size_t j = 0; j < fields.size(); ++j) {
            data.push_back(parse_double(fields[j], src + ": line " + std::to_string(line_no) + ", column " +
                                                       t.header[j]));
        }
        ++rows;
    }
    if (t.header.empty()) fail(Errc::Format, src + ": empty CSV file");
    t.values = Matrix(rows, t.header.size(), std::move(data));
    return t;
}

void write_csv(const std::filesystem::path& path, const std::vector<CsvColumn>& columns) {
    if (columns.empty()) fail(Errc::InvalidArgument, "write_csv: no columns");
    const std::size_t n = columns.front().values.size();
    std::string out;
    for (std::size_t j = 0; j < columns.size(); ++j) {
        if (columns[j].values.size() != n) fail(Errc::DimMismatch, "write_csv: column lengths differ");
        out += (j ? "," : "") + columns[j].name;
    }
    out += '\n';
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < columns.size(); ++j) {
            if (j) out += ',';
            out += format_double(columns[j].values[r]);
        }
        out += '\n';
    }
    write_file(path, out);
}

Matrix read_features(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMatrixMagic, 4) == 0) {
        return decode_matrix(bytes, path.string());
    }
    CsvTable t = read_csv(path);
    for (std::size_t r = 0; r < t.values.rows(); ++r) {
        for (std::size_t j = 0; j < t.values.cols(); ++j) {
            if (!std::isfinite(t.values(r, j))) {
                fail(Errc::Format, path.string() + ": non-finite value at row " + std::to_string(r) + ", column " +
                                       t.header[j]);
            }
        }
    }
    return std::move(t.values);
}

std::vector<int> read_labels(const std::filesystem::path& path) {
    const Matrix m = read_features(path);
    if (m.cols() == 0) fail(Errc::Format, path.string() + ": no label column");
    std::vector<int> out(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double v = m(r, 0);
        if (v != std::round(v) || std::abs(v) > 1e9) {
            fail(Errc::Format, path.string() + ": label at row " + std::to_string(r) + " is not an integer");
        }
        out[r] = static_cast<int>(v);
    }
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) fail(Errc::Io, "error reading " + path.string());
    return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::Io, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) fail(Errc::Io, "error writing " + path.string());
}

}  // namespace luq
