#include "fabcap/report/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace fabcap::report
{

namespace
{

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
constexpr int kLeft = 70;
constexpr int kRight = 20;
constexpr int kTop = 30;
constexpr int kBottom = 40;

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string escape(const std::string& s)
{
    std::string out;
    for (char c : s)
    {
        switch (c)
        {
        case '<':
            out += "&lt;";
            break;
        case '>':
            out += "&gt;";
            break;
        case '&':
            out += "&amp;";
            break;
        default:
            out += c;
        }
    }
    return out;
}

struct Range
{
    double lo = INFINITY;
    double hi = -INFINITY;

    void add(double v)
    {
        if (std::isfinite(v))
        {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    void finish(bool include_zero)
    {
        if (!std::isfinite(lo))
        {
            lo = 0.0;
            hi = 1.0;
        }
        if (include_zero)
        {
            lo = std::min(lo, 0.0);
            hi = std::max(hi, 0.0);
        }
        if (hi - lo < 1e-12)
        {
            hi = lo + 1.0;
        }
        const double pad = 0.05 * (hi - lo);
        if (!(include_zero && lo == 0.0))
        {
            lo -= pad;
        }
        hi += pad;
    }
};

void axes(std::ostringstream& out, const Panel& p, int w, int h, const Range& y)
{
    const int plot_h = h - kTop - kBottom;
    out << "<text x=\"" << w / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << escape(p.title)
        << "</text>\n";
    out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + plot_h
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << w - kRight << "\" y2=\""
        << kTop + plot_h << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i)
    {
        const double v = y.lo + (y.hi - y.lo) * i / 4.0;
        const double py = kTop + plot_h - plot_h * i / 4.0;
        out << "<text x=\"" << kLeft - 5 << "\" y=\"" << py + 4 << "\" text-anchor=\"end\" font-size=\"10\">"
            << num(v) << "</text>\n";
        out << "<line x1=\"" << kLeft << "\" y1=\"" << py << "\" x2=\"" << w - kRight << "\" y2=\"" << py
            << "\" stroke=\"#ddd\"/>\n";
    }
    out << "<text x=\"14\" y=\"" << kTop + plot_h / 2 << "\" font-size=\"11\" transform=\"rotate(-90 14 "
        << kTop + plot_h / 2 << ")\" text-anchor=\"middle\">" << escape(p.y_label) << "</text>\n";
    out << "<text x=\"" << (kLeft + w - kRight) / 2 << "\" y=\"" << h - 8
        << "\" text-anchor=\"middle\" font-size=\"11\">" << escape(p.x_label) << "</text>\n";
}

void line_panel(std::ostringstream& out, const Panel& p, int w, int h)
{
    Range x, y;
    for (const auto& s : p.lines)
    {
        for (double v : s.x)
        {
            x.add(v);
        }
        for (double v : s.y)
        {
            y.add(v);
        }
    }
    x.finish(false);
    y.finish(false);
    axes(out, p, w, h, y);
    const int plot_w = w - kLeft - kRight;
    const int plot_h = h - kTop - kBottom;
    for (int i = 0; i <= 4; ++i)
    {
        const double v = x.lo + (x.hi - x.lo) * i / 4.0;
        out << "<text x=\"" << kLeft + plot_w * i / 4.0 << "\" y=\"" << kTop + plot_h + 14
            << "\" text-anchor=\"middle\" font-size=\"10\">" << num(v) << "</text>\n";
    }
    for (std::size_t k = 0; k < p.lines.size(); ++k)
    {
        const auto& s = p.lines[k];
        const char* colour = kPalette[k % std::size(kPalette)];
        std::string path;
        bool pen = false;
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i)
        {
            if (!std::isfinite(s.y[i]) || !std::isfinite(s.x[i]))
            {
                pen = false;
                continue;
            }
            const double px = kLeft + plot_w * (s.x[i] - x.lo) / (x.hi - x.lo);
            const double py = kTop + plot_h - plot_h * (s.y[i] - y.lo) / (y.hi - y.lo);
            path += (pen ? " L" : " M") + num(px) + " " + num(py);
            pen = true;
        }
        out << "<path d=\"" << path << "\" fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\"/>\n";
        out << "<text x=\"" << kLeft + 8 << "\" y=\"" << kTop + 12 + 13 * k << "\" font-size=\"11\" fill=\""
            << colour << "\">" << escape(s.name) << "</text>\n";
    }
}

void bar_panel(std::ostringstream& out, const Panel& p, int w, int h)
{
    Range y;
    for (double v : p.bar_values)
    {
        y.add(v);
    }
    y.finish(true);
    axes(out, p, w, h, y);
    const int plot_w = w - kLeft - kRight;
    const int plot_h = h - kTop - kBottom;
    const std::size_t n = p.bar_values.size();
    if (n == 0)
    {
        return;
    }
    const double slot = static_cast<double>(plot_w) / static_cast<double>(n);
    const double zero = kTop + plot_h - plot_h * (0.0 - y.lo) / (y.hi - y.lo);
    for (std::size_t i = 0; i < n; ++i)
    {
        const double v = std::isfinite(p.bar_values[i]) ? p.bar_values[i] : 0.0;
        const double top = kTop + plot_h - plot_h * (v - y.lo) / (y.hi - y.lo);
        const double bx = kLeft + slot * (static_cast<double>(i) + 0.15);
        out << "<rect x=\"" << num(bx) << "\" y=\"" << num(std::min(top, zero)) << "\" width=\"" << num(slot * 0.7)
            << "\" height=\"" << num(std::abs(zero - top)) << "\" fill=\"" << kPalette[i % std::size(kPalette)]
            << "\"/>\n";
        const std::string label = i < p.bar_labels.size() ? p.bar_labels[i] : std::string();
        out << "<text x=\"" << num(bx + slot * 0.35) << "\" y=\"" << kTop + plot_h + 14
            << "\" text-anchor=\"middle\" font-size=\"10\">" << escape(label) << "</text>\n";
        out << "<text x=\"" << num(bx + slot * 0.35) << "\" y=\"" << num(std::min(top, zero) - 3)
            << "\" text-anchor=\"middle\" font-size=\"10\">" << num(v) << "</text>\n";
    }
}

} // namespace

std::string render_panels(const std::vector<Panel>& panels, int width, int panel_height)
{
    std::ostringstream out;
    const int total = panel_height * static_cast<int>(std::max<std::size_t>(panels.size(), 1));
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << total
        << "\" font-family=\"sans-serif\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::size_t i = 0; i < panels.size(); ++i)
    {
        out << "<g transform=\"translate(0," << panel_height * static_cast<int>(i) << ")\">\n";
        if (panels[i].lines.empty() && !panels[i].bar_values.empty())
        {
            bar_panel(out, panels[i], width, panel_height);
        }
        else
        {
            line_panel(out, panels[i], width, panel_height);
        }
        out << "</g>\n";
    }
    out << "</svg>\n";
    return out.str();
}

} // namespace fabcap::report
