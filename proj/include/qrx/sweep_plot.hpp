// SVG BLER plots: log-scale BLER vs Eb/N0, one polyline per receiver, one
// panel per velocity band (per profile). Zero estimates are drawn at the
// 0.5/blocks floor.

#pragma once

#include "qrx/sweep.hpp"

namespace qrx {

namespace detail {

inline const char* series_color(std::size_t i) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
    return palette[i % (sizeof(palette) / sizeof(palette[0]))];
}

} // namespace detail

inline void emit_plot(const SweepResult& result, std::ostream& os) {
    // Collect panel keys (profile, band) and series names in encounter order.
    std::vector<std::pair<std::string, std::string>> panels;
    std::vector<std::string> receivers;
    double x_min = 1e30, x_max = -1e30;
    for (const auto& r : result.rows) {
        if (std::find(panels.begin(), panels.end(),
                      std::make_pair(r.profile, r.band)) == panels.end())
            panels.emplace_back(r.profile, r.band);
        if (std::find(receivers.begin(), receivers.end(), r.receiver) == receivers.end())
            receivers.push_back(r.receiver);
        x_min = std::min(x_min, r.ebn0_db);
        x_max = std::max(x_max, r.ebn0_db);
    }
    if (panels.empty()) throw ConfigError("emit_plot: empty sweep result");
    if (x_max <= x_min) x_max = x_min + 1.0;

    const double y_floor_exp = -4.0;  // 1e-4 .. 1
    const int pw = 360, ph = 300, margin = 48, legend_h = 18 * static_cast<int>(receivers.size());
    const int width = margin + static_cast<int>(panels.size()) * (pw + margin);
    const int height = ph + 2 * margin + legend_h;

    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
       << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    os << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";

    char buf[256];
    for (std::size_t p = 0; p < panels.size(); ++p) {
        const int x0 = margin + static_cast<int>(p) * (pw + margin);
        const int y0 = margin;
        auto sx = [&](double ebn0) {
            return x0 + (ebn0 - x_min) / (x_max - x_min) * pw;
        };
        auto sy = [&](double bler) {
            const double e = std::max(y_floor_exp, std::log10(std::max(bler, 1e-12)));
            return y0 + (0.0 - e) / (0.0 - y_floor_exp) * ph;
        };

        os << "<g>\n";
        os << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << pw << "\" height=\""
           << ph << "\" fill=\"none\" stroke=\"black\"/>\n";
        os << "<text x=\"" << x0 + pw / 2 << "\" y=\"" << y0 - 10
           << "\" text-anchor=\"middle\" font-size=\"13\">" << panels[p].first << " / "
           << panels[p].second << "</text>\n";
        // Log ticks and gridlines.
        for (int e = 0; e >= static_cast<int>(y_floor_exp); --e) {
            const double y = sy(std::pow(10.0, e));
            std::snprintf(buf, sizeof(buf),
                          "<line x1=\"%d\" y1=\"%.1f\" x2=\"%d\" y2=\"%.1f\" stroke=\"#ddd\"/>\n",
                          x0, y, x0 + pw, y);
            os << buf;
            std::snprintf(buf, sizeof(buf),
                          "<text x=\"%d\" y=\"%.1f\" text-anchor=\"end\" font-size=\"10\">1e%d</text>\n",
                          x0 - 4, y + 3, e);
            os << buf;
        }
        for (double x = std::ceil(x_min); x <= x_max + 1e-9; x += 2.0) {
            std::snprintf(buf, sizeof(buf),
                          "<text x=\"%.1f\" y=\"%d\" text-anchor=\"middle\" font-size=\"10\">%g</text>\n",
                          sx(x), y0 + ph + 14, x);
            os << buf;
        }
        os << "<text x=\"" << x0 + pw / 2 << "\" y=\"" << y0 + ph + 30
           << "\" text-anchor=\"middle\" font-size=\"11\">Eb/N0 (dB)</text>\n";

        for (std::size_t s = 0; s < receivers.size(); ++s) {
            const auto series = result.series(receivers[s], panels[p].first, panels[p].second);
            if (series.empty()) continue;
            os << "<polyline class=\"series\" data-receiver=\"" << receivers[s]
               << "\" fill=\"none\" stroke=\"" << detail::series_color(s)
               << "\" stroke-width=\"1.5\" points=\"";
            for (const auto* row : series) {
                const double b = row->bler() > 0.0
                                     ? row->bler()
                                     : 0.5 / std::max<long>(1, row->blocks);
                std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", sx(row->ebn0_db), sy(b));
                os << buf;
            }
            os << "\"/>\n";
        }
        os << "</g>\n";
    }

    // Legend.
    for (std::size_t s = 0; s < receivers.size(); ++s) {
        const int ly = ph + margin + 24 + static_cast<int>(s) * 18;
        std::snprintf(buf, sizeof(buf),
                      "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"%s\" "
                      "stroke-width=\"2\"/>\n",
                      margin, ly, margin + 28, ly, detail::series_color(s));
        os << buf;
        os << "<text x=\"" << margin + 34 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">"
           << receivers[s] << "</text>\n";
    }
    os << "</svg>\n";
}

inline void emit_plot(const SweepResult& result, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write SVG: " + path);
    emit_plot(result, f);
}

} // namespace qrx
