#include "sdabn/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sdabn/errors.hpp"
#include "sdabn/image.hpp"

namespace sdabn {

namespace {

// 5x7 bitmap glyphs for the plot labels (digits, letters used by metric
// names, and a few symbols). Each entry is 7 rows of 5 bits, MSB left.
const std::map<char, std::array<std::uint8_t, 7>>& glyphs() {
    static const std::map<char, std::array<std::uint8_t, 7>> table = {
        {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}},
        {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
        {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}},
        {'3', {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}},
        {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}},
        {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
        {'6', {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}},
        {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
        {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}},
        {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}},
        {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c}},
        {'-', {0x00, 0x00, 0x00, 0x1f, 0x00, 0x00, 0x00}},
        {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1f}},
        {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
        {'a', {0x00, 0x00, 0x0e, 0x01, 0x0f, 0x11, 0x0f}},
        {'b', {0x10, 0x10, 0x1e, 0x11, 0x11, 0x11, 0x1e}},
        {'c', {0x00, 0x00, 0x0e, 0x11, 0x10, 0x11, 0x0e}},
        {'d', {0x01, 0x01, 0x0f, 0x11, 0x11, 0x11, 0x0f}},
        {'e', {0x00, 0x00, 0x0e, 0x11, 0x1f, 0x10, 0x0e}},
        {'f', {0x06, 0x08, 0x1e, 0x08, 0x08, 0x08, 0x08}},
        {'g', {0x00, 0x0f, 0x11, 0x11, 0x0f, 0x01, 0x0e}},
        {'h', {0x10, 0x10, 0x1e, 0x11, 0x11, 0x11, 0x11}},
        {'i', {0x04, 0x00, 0x0c, 0x04, 0x04, 0x04, 0x0e}},
        {'j', {0x02, 0x00, 0x06, 0x02, 0x02, 0x12, 0x0c}},
        {'k', {0x10, 0x10, 0x12, 0x14, 0x18, 0x14, 0x12}},
        {'l', {0x0c, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e}},
        {'m', {0x00, 0x00, 0x1a, 0x15, 0x15, 0x15, 0x15}},
        {'n', {0x00, 0x00, 0x1e, 0x11, 0x11, 0x11, 0x11}},
        {'o', {0x00, 0x00, 0x0e, 0x11, 0x11, 0x11, 0x0e}},
        {'p', {0x00, 0x1e, 0x11, 0x11, 0x1e, 0x10, 0x10}},
        {'q', {0x00, 0x0f, 0x11, 0x11, 0x0f, 0x01, 0x01}},
        {'r', {0x00, 0x00, 0x16, 0x19, 0x10, 0x10, 0x10}},
        {'s', {0x00, 0x00, 0x0f, 0x10, 0x0e, 0x01, 0x1e}},
        {'t', {0x08, 0x08, 0x1e, 0x08, 0x08, 0x09, 0x06}},
        {'u', {0x00, 0x00, 0x11, 0x11, 0x11, 0x13, 0x0d}},
        {'v', {0x00, 0x00, 0x11, 0x11, 0x11, 0x0a, 0x04}},
        {'w', {0x00, 0x00, 0x15, 0x15, 0x15, 0x15, 0x0a}},
        {'x', {0x00, 0x00, 0x11, 0x0a, 0x04, 0x0a, 0x11}},
        {'y', {0x00, 0x11, 0x11, 0x0f, 0x01, 0x11, 0x0e}},
        {'z', {0x00, 0x00, 0x1f, 0x02, 0x04, 0x08, 0x1f}},
    };
    return table;
}

struct Canvas {
    Image img;
    explicit Canvas(std::int64_t h, std::int64_t w) : img(h, w, 3) {
        std::fill(img.data.begin(), img.data.end(), 1.0);
    }
    void put(std::int64_t y, std::int64_t x, const double rgb[3]) {
        if (y < 0 || x < 0 || y >= img.height || x >= img.width) return;
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = rgb[c];
    }
    void line(double y0, double x0, double y1, double x1, const double rgb[3]) {
        const double len = std::max(std::abs(y1 - y0), std::abs(x1 - x0));
        const int steps = std::max(1, static_cast<int>(std::ceil(len)));
        for (int s = 0; s <= steps; ++s) {
            const double t = static_cast<double>(s) / steps;
            put(static_cast<std::int64_t>(std::lround(y0 + t * (y1 - y0))),
                static_cast<std::int64_t>(std::lround(x0 + t * (x1 - x0))), rgb);
        }
    }
    void text(std::int64_t y, std::int64_t x, const std::string& s, const double rgb[3]) {
        std::int64_t cx = x;
        for (char raw : s) {
            const char ch = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
            auto it = glyphs().find(ch);
            if (it != glyphs().end()) {
                for (int row = 0; row < 7; ++row) {
                    for (int col = 0; col < 5; ++col) {
                        if (it->second[static_cast<std::size_t>(row)] & (0x10 >> col)) {
                            put(y + row, cx + col, rgb);
                        }
                    }
                }
            }
            cx += 6;
        }
    }
};

constexpr double kSeriesColors[6][3] = {
    {0.80, 0.22, 0.18}, {0.18, 0.35, 0.80}, {0.10, 0.55, 0.25},
    {0.75, 0.55, 0.05}, {0.50, 0.20, 0.65}, {0.05, 0.55, 0.60},
};
constexpr double kBlack[3] = {0.0, 0.0, 0.0};
constexpr double kGray[3] = {0.75, 0.75, 0.75};

std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

struct Series {
    std::string label;
    std::vector<std::pair<double, double>> points;  // (x, y)
};

void render_line_plot(const std::filesystem::path& path, const std::string& title,
                      const std::vector<Series>& series) {
    const std::int64_t width = 640, height = 420;
    const std::int64_t left = 70, right = 20, top = 40, bottom = 45;
    Canvas canvas(height, width);

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const Series& s : series) {
        for (auto [x, y] : s.points) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    }
    if (xmin > xmax) return;
    if (xmax == xmin) {
        xmax += 1.0;
        xmin -= 1.0;
    }
    const double ypad = (ymax == ymin) ? std::max(1e-6, std::abs(ymax) * 0.1) : 0.08 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto px = [&](double x) {
        return left + (x - xmin) / (xmax - xmin) * static_cast<double>(width - left - right);
    };
    auto py = [&](double y) {
        return (height - bottom) - (y - ymin) / (ymax - ymin) * static_cast<double>(height - top - bottom);
    };

    for (int tick = 0; tick <= 4; ++tick) {
        const double ty = ymin + (ymax - ymin) * tick / 4.0;
        canvas.line(py(ty), left, py(ty), width - right, kGray);
        canvas.text(static_cast<std::int64_t>(py(ty)) - 3, 8, format_number(ty), kBlack);
    }
    std::set<double> xticks;
    for (const Series& s : series) {
        for (auto [x, y] : s.points) xticks.insert(x);
    }
    if (xticks.size() > 8) {
        std::set<double> reduced = {*xticks.begin(), *xticks.rbegin()};
        xticks = reduced;
    }
    for (double tx : xticks) {
        canvas.line(height - bottom, px(tx), height - bottom + 4, px(tx), kBlack);
        canvas.text(height - bottom + 8, static_cast<std::int64_t>(px(tx)) - 8, format_number(tx), kBlack);
    }
    canvas.line(height - bottom, left, height - bottom, width - right, kBlack);
    canvas.line(top, left, height - bottom, left, kBlack);
    canvas.text(12, left, title, kBlack);

    for (std::size_t i = 0; i < series.size(); ++i) {
        const double* rgb = kSeriesColors[i % 6];
        const auto& pts = series[i].points;
        for (std::size_t k = 1; k < pts.size(); ++k) {
            canvas.line(py(pts[k - 1].second), px(pts[k - 1].first), py(pts[k].second), px(pts[k].first), rgb);
        }
        for (const auto& [x, y] : pts) {
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    canvas.put(static_cast<std::int64_t>(py(y)) + dy, static_cast<std::int64_t>(px(x)) + dx, rgb);
                }
            }
        }
        const std::int64_t ly = top + static_cast<std::int64_t>(i) * 12;
        canvas.line(ly + 3, width - right - 120, ly + 3, width - right - 100, rgb);
        canvas.text(ly, width - right - 95, series[i].label, kBlack);
    }
    save_image(canvas.img, path);
}

}  // namespace

RunSummary read_run_summary(const std::filesystem::path& run_dir) {
    RunSummary summary;
    summary.run_name = run_dir.filename().string();

    const auto cfg_path = run_dir / "config_resolved.json";
    std::ifstream cfg_in(cfg_path);
    if (!cfg_in) throw IoError("missing " + cfg_path.string());
    nlohmann::json cfg;
    try {
        cfg_in >> cfg;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(cfg_path.string() + ": " + e.what());
    }
    summary.experiment_id = cfg.value("experiment_id", summary.run_name);
    summary.blocks = cfg.at("model").value("blocks", 0);
    const auto& noise = cfg.at("noise");
    summary.noise_kind = noise.value("kind", "gaussian");
    summary.noise_level = summary.noise_kind == "gaussian" ? noise.value("sigma", 0.0)
                                                           : noise.value("peak", 0.0);

    const auto csv_path = run_dir / "metrics.csv";
    std::ifstream in(csv_path);
    if (!in) throw IoError("missing " + csv_path.string());
    std::string line;
    std::string split = "test";
    bool saw_rows = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.rfind("# split:", 0) == 0) {
            split = line.substr(8);
            while (!split.empty() && split.front() == ' ') split.erase(split.begin());
            continue;
        }
        if (line.front() == '#') continue;
        if (line.rfind("experiment_id,", 0) == 0) continue;  // header
        std::stringstream ss(line);
        std::string id, unit_s, metric, value_s;
        if (!std::getline(ss, id, ',') || !std::getline(ss, unit_s, ',') ||
            !std::getline(ss, metric, ',') || !std::getline(ss, value_s)) {
            throw DataError(csv_path.string() + ": malformed row '" + line + "'");
        }
        summary.values[split][std::stoi(unit_s)][metric] = std::stod(value_s);
        saw_rows = true;
    }
    if (!saw_rows) throw DataError(csv_path.string() + ": no metric rows");
    return summary;
}

void write_report(const std::vector<RunSummary>& runs, const std::filesystem::path& out_dir) {
    if (runs.empty()) throw UsageError("report: no runs given");
    std::filesystem::create_directories(out_dir);

    static const char* kMetrics[] = {"psnr", "ssim", "miou", "pixel_accuracy", "mean_accuracy"};

    // tidy CSV
    {
        std::ofstream out(out_dir / "summary.csv", std::ios::binary);
        out << "run,experiment_id,noise_kind,noise_level,split,unit,metric,value\n";
        char buf[64];
        for (const RunSummary& run : runs) {
            for (const auto& [split, units] : run.values) {
                for (const auto& [unit, metrics] : units) {
                    for (const auto& [metric, value] : metrics) {
                        std::snprintf(buf, sizeof(buf), "%.6f", value);
                        out << run.run_name << ',' << run.experiment_id << ',' << run.noise_kind << ','
                            << run.noise_level << ',' << split << ',' << unit << ',' << metric << ','
                            << buf << "\n";
                    }
                }
            }
        }
    }

    // aligned text table
    {
        std::ofstream out(out_dir / "summary.txt", std::ios::binary);
        for (const RunSummary& run : runs) {
            out << "run " << run.run_name << "  (" << run.experiment_id << ", " << run.noise_kind << " "
                << run.noise_level << ")\n";
            for (const auto& [split, units] : run.values) {
                out << "  split " << split << "\n";
                char buf[160];
                std::snprintf(buf, sizeof(buf), "    %-5s %10s %10s %10s %10s %10s\n", "unit", "psnr",
                              "ssim", "miou", "pix_acc", "mean_acc");
                out << buf;
                for (const auto& [unit, metrics] : units) {
                    auto cell = [&](const char* name) -> std::string {
                        auto it = metrics.find(name);
                        if (it == metrics.end()) return "-";
                        char v[32];
                        std::snprintf(v, sizeof(v), "%.4f", it->second);
                        return v;
                    };
                    std::snprintf(buf, sizeof(buf), "    %-5d %10s %10s %10s %10s %10s\n", unit,
                                  cell("psnr").c_str(), cell("ssim").c_str(), cell("miou").c_str(),
                                  cell("pixel_accuracy").c_str(), cell("mean_accuracy").c_str());
                    out << buf;
                }
            }
            out << "\n";
        }
    }

    // metric vs unit plots (test split)
    for (const char* metric : {"psnr", "miou"}) {
        std::vector<Series> series;
        for (const RunSummary& run : runs) {
            auto split_it = run.values.find("test");
            if (split_it == run.values.end()) continue;
            Series s;
            s.label = run.run_name;
            for (const auto& [unit, metrics] : split_it->second) {
                if (unit == 0) continue;
                auto it = metrics.find(metric);
                if (it != metrics.end()) s.points.emplace_back(static_cast<double>(unit), it->second);
            }
            if (!s.points.empty()) series.push_back(std::move(s));
        }
        if (!series.empty()) {
            render_line_plot(out_dir / (std::string(metric) + "_vs_units.png"),
                             std::string(metric) + " vs units", series);
        }
    }

    // metric vs noise level plots when several levels are present
    std::set<double> levels;
    for (const RunSummary& run : runs) levels.insert(run.noise_level);
    if (levels.size() >= 2) {
        for (const char* metric : kMetrics) {
            Series s;
            s.label = metric;
            std::map<double, double> by_level;
            for (const RunSummary& run : runs) {
                auto split_it = run.values.find("test");
                if (split_it == run.values.end()) continue;
                for (auto it = split_it->second.rbegin(); it != split_it->second.rend(); ++it) {
                    auto m = it->second.find(metric);
                    if (m != it->second.end()) {
                        by_level[run.noise_level] = m->second;
                        break;
                    }
                }
            }
            for (const auto& [level, value] : by_level) s.points.emplace_back(level, value);
            if (s.points.size() >= 2) {
                render_line_plot(out_dir / (std::string(metric) + "_vs_noise.png"),
                                 std::string(metric) + " vs noise level", {s});
            }
        }
    }
}

}  // namespace sdabn
