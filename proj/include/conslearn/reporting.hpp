#pragma once

// Turns run directories and ablation tables into summary tables and simple
// SVG line plots. Output depends only on the input files.

#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace conslearn::reporting {

struct CsvTable {
    std::string source;  ///< file name, used in error messages
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Index of a column; throws std::runtime_error naming the column and the source.
    [[nodiscard]] std::size_t column(const std::string& name) const;
    /// Numeric cell; empty cells read as NaN.
    [[nodiscard]] double number(std::size_t row, std::size_t col) const;
};

/// RFC-4180 style: comma separated, double quotes around fields with commas or quotes.
CsvTable parse_csv(const std::string& text, const std::string& source);
CsvTable read_csv(const std::filesystem::path& path);

struct RunSummary {
    std::string name;
    std::size_t epochs = 0;
    std::size_t iterations = 0;
    double final_loss = 0.0;
    double mAP = 0.0, cmc1 = 0.0, cmc5 = 0.0, cmc10 = 0.0;  ///< last evaluated epoch
};

/// Reads <dir>/epochs.csv and <dir>/iterations.csv.
RunSummary summarize_run(const std::filesystem::path& dir);
std::string summary_csv(const std::vector<RunSummary>& runs);
std::string summary_text(const std::vector<RunSummary>& runs);

/// Row order of an ablation table by mean mAP, descending; ties keep file order.
std::vector<std::size_t> ablation_order(const CsvTable& table);
std::string ablation_text(const CsvTable& table);
std::string ablation_sorted_csv(const CsvTable& table);

struct Series {
    std::string name;
    std::vector<double> x, y;  ///< non-finite y values are skipped
};

std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<Series>& series);

enum class Format { csv, txt, svg };

struct ReportSpec {
    /// Run directories (with epochs.csv and iterations.csv) or ablation CSV files.
    std::vector<std::filesystem::path> inputs;
    std::filesystem::path output_dir;
    std::set<Format> formats{Format::csv, Format::txt, Format::svg};
};

/// Writes summary.{csv,txt}, <run>_loss.svg and <run>_cmc.svg per run directory,
/// and <table>_sorted.csv / <table>.txt per ablation table. Returns the files written.
std::vector<std::filesystem::path> render(const ReportSpec& spec);

}  // namespace conslearn::reporting
