#include "conslearn/reporting.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace conslearn::reporting {

namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), pattern, v);
    return buf;
}

std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string safe_name(const std::string& s) {
    std::string out;
    for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ? c : '_';
    return out.empty() ? "run" : out;
}

// Last non-empty path component, so "runs/a/" names the run "a".
std::string base_name(const fs::path& p) {
    fs::path q = p;
    if (!q.has_filename()) q = q.parent_path();
    return q.filename().string();
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::runtime_error(source + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
}

double CsvTable::number(std::size_t row, std::size_t col) const {
    const std::string& cell = rows.at(row).at(col);
    if (cell.empty()) return std::numeric_limits<double>::quiet_NaN();
    try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used == cell.size()) return v;
    } catch (const std::exception&) {
    }
    throw std::runtime_error(source + ": column '" + header.at(col) + "' row " + std::to_string(row + 1) +
                             ": not a number: '" + cell + "'");
}

CsvTable parse_csv(const std::string& text, const std::string& source) {
    CsvTable t;
    t.source = source;
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            record.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                record.push_back(std::move(field));
                records.push_back(std::move(record));
            }
            field.clear();
            record.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    if (quoted) throw std::runtime_error(source + ": unterminated quoted field");
    if (any || !field.empty()) {
        record.push_back(std::move(field));
        records.push_back(std::move(record));
    }
    if (records.empty()) throw std::runtime_error(source + ": empty CSV file");
    t.header = std::move(records.front());
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != t.header.size()) {
            throw std::runtime_error(source + ": row " + std::to_string(r) + " has " +
                                     std::to_string(records[r].size()) + " fields, header has " +
                                     std::to_string(t.header.size()));
        }
        t.rows.push_back(std::move(records[r]));
    }
    return t;
}

CsvTable read_csv(const fs::path& path) { return parse_csv(read_text(path), path.string()); }

RunSummary summarize_run(const fs::path& dir) {
    const CsvTable epochs = read_csv(dir / "epochs.csv");
    const CsvTable iters = read_csv(dir / "iterations.csv");
    RunSummary s;
    s.name = base_name(dir);
    s.epochs = epochs.rows.size();
    s.iterations = iters.rows.size();
    const std::size_t total = iters.column("total");
    if (!iters.rows.empty()) s.final_loss = iters.number(iters.rows.size() - 1, total);
    const std::size_t m = epochs.column("mAP"), c1 = epochs.column("cmc1"), c5 = epochs.column("cmc5"),
                      c10 = epochs.column("cmc10");
    for (std::size_t r = epochs.rows.size(); r-- > 0;) {
        const double v = epochs.number(r, m);
        if (std::isnan(v)) continue;
        s.mAP = v;
        s.cmc1 = epochs.number(r, c1);
        s.cmc5 = epochs.number(r, c5);
        s.cmc10 = epochs.number(r, c10);
        break;
    }
    return s;
}

std::string summary_csv(const std::vector<RunSummary>& runs) {
    std::string out = "run,epochs,iterations,final_loss,mAP,cmc1,cmc5,cmc10\n";
    for (const auto& r : runs) {
        out += quote_if_needed(r.name) + "," + std::to_string(r.epochs) + "," + std::to_string(r.iterations) + "," +
               fmt("%.17g", r.final_loss) + "," + fmt("%.17g", r.mAP) + "," + fmt("%.17g", r.cmc1) + "," +
               fmt("%.17g", r.cmc5) + "," + fmt("%.17g", r.cmc10) + "\n";
    }
    return out;
}

std::string summary_text(const std::vector<RunSummary>& runs) {
    std::size_t width = 3;
    for (const auto& r : runs) width = std::max(width, r.name.size());
    char line[512];
    std::snprintf(line, sizeof(line), "%-*s  %6s  %10s  %6s  %6s  %6s  %6s\n", static_cast<int>(width), "run", "epochs",
                  "final loss", "mAP", "top-1", "top-5", "top-10");
    std::string out = line;
    for (const auto& r : runs) {
        std::snprintf(line, sizeof(line), "%-*s  %6zu  %10.4f  %6.2f  %6.2f  %6.2f  %6.2f\n", static_cast<int>(width),
                      r.name.c_str(), r.epochs, r.final_loss, 100 * r.mAP, 100 * r.cmc1, 100 * r.cmc5, 100 * r.cmc10);
        out += line;
    }
    return out;
}

std::vector<std::size_t> ablation_order(const CsvTable& table) {
    const std::size_t m = table.column("mAP");
    std::vector<double> key(table.rows.size());
    for (std::size_t r = 0; r < key.size(); ++r) key[r] = table.number(r, m);
    std::vector<std::size_t> order(table.rows.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] > key[b]; });
    return order;
}

std::string ablation_text(const CsvTable& table) {
    const std::size_t name = table.column("setting"), m = table.column("mAP"), c1 = table.column("cmc1"),
                      c5 = table.column("cmc5"), c10 = table.column("cmc10");
    std::size_t width = 7;
    for (const auto& row : table.rows) width = std::max(width, row[name].size());
    char line[512];
    std::snprintf(line, sizeof(line), "%-*s  %6s  %6s  %6s  %6s\n", static_cast<int>(width), "setting", "mAP", "top-1",
                  "top-5", "top-10");
    std::string out = line;
    for (std::size_t r : ablation_order(table)) {
        std::snprintf(line, sizeof(line), "%-*s  %6.2f  %6.2f  %6.2f  %6.2f\n", static_cast<int>(width),
                      table.rows[r][name].c_str(), 100 * table.number(r, m), 100 * table.number(r, c1),
                      100 * table.number(r, c5), 100 * table.number(r, c10));
        out += line;
    }
    return out;
}

std::string ablation_sorted_csv(const CsvTable& table) {
    std::string out;
    auto emit = [&](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + quote_if_needed(row[i]);
        out += "\n";
    };
    emit(table.header);
    for (std::size_t r : ablation_order(table)) emit(table.rows[r]);
    return out;
}

std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<Series>& series) {
    constexpr double W = 640, H = 400, left = 70, right = 170, top = 40, bottom = 50;
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size()) throw std::invalid_argument("svg_line_plot: x and y differ in length");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.y[i]) || !std::isfinite(s.x[i])) continue;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    const double pw = W - left - right, ph = H - top - bottom;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

    std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\">\n";
    out += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
    out += "<text x=\"" + fmt("%.1f", left + pw / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" +
           xml_escape(title) + "</text>\n";
    out += "<rect x=\"" + fmt("%.1f", left) + "\" y=\"" + fmt("%.1f", top) + "\" width=\"" + fmt("%.1f", pw) +
           "\" height=\"" + fmt("%.1f", ph) + "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = x0 + (x1 - x0) * k / 4, yv = y0 + (y1 - y0) * k / 4;
        out += "<text x=\"" + fmt("%.1f", px(xv)) + "\" y=\"" + fmt("%.1f", top + ph + 16) +
               "\" text-anchor=\"middle\" font-size=\"11\">" + fmt("%.4g", xv) + "</text>\n";
        out += "<text x=\"" + fmt("%.1f", left - 6) + "\" y=\"" + fmt("%.1f", py(yv) + 4) +
               "\" text-anchor=\"end\" font-size=\"11\">" + fmt("%.4g", yv) + "</text>\n";
        out += "<line x1=\"" + fmt("%.1f", left) + "\" y1=\"" + fmt("%.1f", py(yv)) + "\" x2=\"" +
               fmt("%.1f", left + pw) + "\" y2=\"" + fmt("%.1f", py(yv)) + "\" stroke=\"#dddddd\"/>\n";
    }
    out += "<text x=\"" + fmt("%.1f", left + pw / 2) + "\" y=\"" + fmt("%.1f", H - 12) +
           "\" text-anchor=\"middle\" font-size=\"12\">" + xml_escape(x_label) + "</text>\n";
    out += "<text x=\"16\" y=\"" + fmt("%.1f", top + ph / 2) + "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 " +
           fmt("%.1f", top + ph / 2) + ")\">" + xml_escape(y_label) + "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* colour = palette[s % std::size(palette)];
        std::string points;
        for (std::size_t i = 0; i < series[s].x.size(); ++i) {
            if (!std::isfinite(series[s].y[i]) || !std::isfinite(series[s].x[i])) continue;
            points += (points.empty() ? "" : " ") + fmt("%.2f", px(series[s].x[i])) + "," + fmt("%.2f", py(series[s].y[i]));
        }
        out += "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"1.5\" points=\"" + points +
               "\"/>\n";
        const double ly = top + 14 + 18.0 * static_cast<double>(s);
        out += "<line x1=\"" + fmt("%.1f", left + pw + 12) + "\" y1=\"" + fmt("%.1f", ly) + "\" x2=\"" +
               fmt("%.1f", left + pw + 36) + "\" y2=\"" + fmt("%.1f", ly) + "\" stroke=\"" + colour +
               "\" stroke-width=\"2\"/>\n";
        out += "<text x=\"" + fmt("%.1f", left + pw + 42) + "\" y=\"" + fmt("%.1f", ly + 4) + "\" font-size=\"12\">" +
               xml_escape(series[s].name) + "</text>\n";
    }
    out += "</svg>\n";
    return out;
}

std::vector<fs::path> render(const ReportSpec& spec) {
    if (spec.inputs.empty()) throw std::invalid_argument("report: no inputs");
    const bool csv = spec.formats.contains(Format::csv), txt = spec.formats.contains(Format::txt),
               svg = spec.formats.contains(Format::svg);
    std::vector<RunSummary> runs;
    std::vector<fs::path> run_dirs;
    std::vector<std::pair<std::string, CsvTable>> tables;
    std::map<std::string, int> used;
    auto unique = [&](const std::string& base) {
        const int n = used[base]++;
        return n == 0 ? base : base + "_" + std::to_string(n + 1);
    };
    for (const fs::path& in : spec.inputs) {
        if (fs::is_directory(in)) {
            RunSummary s = summarize_run(in);
            s.name = unique(safe_name(s.name));
            runs.push_back(std::move(s));
            run_dirs.push_back(in);
        } else if (fs::is_regular_file(in)) {
            CsvTable t = read_csv(in);
            for (const char* col : {"setting", "mAP", "cmc1", "cmc5", "cmc10"}) (void)t.column(col);
            tables.emplace_back(unique(safe_name(in.stem().string())), std::move(t));
        } else {
            throw std::runtime_error("report: input does not exist: " + in.string());
        }
    }

    fs::create_directories(spec.output_dir);
    std::vector<fs::path> written;
    auto emit = [&](const std::string& name, const std::string& text) {
        const fs::path p = spec.output_dir / name;
        write_text(p, text);
        written.push_back(p);
    };
    if (!runs.empty()) {
        if (csv) emit("summary.csv", summary_csv(runs));
        if (txt) emit("summary.txt", summary_text(runs));
    }
    if (svg) {
        for (std::size_t r = 0; r < runs.size(); ++r) {
            const CsvTable iters = read_csv(run_dirs[r] / "iterations.csv");
            const std::size_t it = iters.column("iteration");
            std::vector<Series> loss;
            for (const char* col : {"ce", "st", "co", "total"}) {
                Series s{col, {}, {}};
                const std::size_t c = iters.column(col);
                for (std::size_t i = 0; i < iters.rows.size(); ++i) {
                    s.x.push_back(iters.number(i, it));
                    s.y.push_back(iters.number(i, c));
                }
                loss.push_back(std::move(s));
            }
            emit(runs[r].name + "_loss.svg", svg_line_plot(runs[r].name + ": loss components", "iteration", "loss", loss));

            const CsvTable epochs = read_csv(run_dirs[r] / "epochs.csv");
            const std::size_t ep = epochs.column("epoch");
            std::vector<Series> cmc;
            for (const char* col : {"mAP", "cmc1", "cmc5", "cmc10"}) {
                Series s{col, {}, {}};
                const std::size_t c = epochs.column(col);
                for (std::size_t i = 0; i < epochs.rows.size(); ++i) {
                    s.x.push_back(epochs.number(i, ep));
                    s.y.push_back(epochs.number(i, c));
                }
                cmc.push_back(std::move(s));
            }
            emit(runs[r].name + "_cmc.svg", svg_line_plot(runs[r].name + ": retrieval", "epoch", "score", cmc));
        }
    }
    for (const auto& [name, table] : tables) {
        if (csv) emit(name + "_sorted.csv", ablation_sorted_csv(table));
        if (txt) emit(name + ".txt", ablation_text(table));
    }
    return written;
}

}  // namespace conslearn::reporting
