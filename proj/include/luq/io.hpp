#pragma once

// On-disk formats.
//
// Matrix file: "LUQ1", u16 version, u32 rows, u32 cols, then rows×cols
// f64 values row-major, all little-endian.
//
// Model file: "LUQM", u16 version, u16 section count, then sections of
// 4-byte tag, u64 payload length, u32 CRC-32 of the payload, payload.
// Tags: PCA_, GMMS, FLOW, GRID, PRIO.
//
// CSV: comma separated, one header row, LF line endings, floats printed
// with 17 significant digits so they read back exactly.

#include "luq/flow.hpp"
#include "luq/gmm.hpp"
#include "luq/linalg.hpp"
#include "luq/priors.hpp"
#include "luq/uncertainty.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace luq {

inline constexpr std::uint16_t kMatrixFileVersion = 1;
inline constexpr std::uint16_t kModelFileVersion = 1;

std::string encode_matrix(const Matrix& m);
// `source` names the origin in error messages. Truncation errors cite the
// byte offset where data ran out.
Matrix decode_matrix(std::string_view bytes, std::string_view source = "matrix");

void write_matrix_file(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix_file(const std::filesystem::path& path);

struct ModelBundle {
    std::optional<PcaModel> pca;
    std::optional<ClassConditionalGmm> gmm;
    std::optional<ConditionalFlow> flow;
    std::optional<SupportGrid> grid;  // flow models only
    OutputPrior prior;

    bool operator==(const ModelBundle&) const = default;
};

std::string encode_model(const ModelBundle& m);
ModelBundle decode_model(std::string_view bytes, std::string_view source = "model");

void write_model_file(const std::filesystem::path& path, const ModelBundle& m);
ModelBundle read_model_file(const std::filesystem::path& path);

// "%.17g"; NaN prints as "nan" and infinities as "inf"/"-inf".
std::string format_double(double v);
double parse_double(std::string_view text, std::string_view context);

struct CsvTable {
    std::vector<std::string> header;
    Matrix values;

    // Throws Errc::Format naming the column when it is absent.
    Vector column(std::string_view name) const;
    bool has_column(std::string_view name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

struct CsvColumn {
    std::string name;
    Vector values;
};

// Columns must share one length. Integral columns still print through
// format_double, which renders them without a fraction.
void write_csv(const std::filesystem::path& path, const std::vector<CsvColumn>& columns);

// Binary matrix when the file starts with the matrix magic, else CSV.
Matrix read_features(const std::filesystem::path& path);
// Integer labels from the first column of a matrix or CSV file.
std::vector<int> read_labels(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace luq
