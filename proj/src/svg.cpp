#include "emoprobe/svg.hpp"

#include <fmt/format.h>

namespace emoprobe {

std::string xml_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

SvgDocument::SvgDocument(double width, double height) : width_(width), height_(height) {}

void SvgDocument::rect(double x, double y, double w, double h, std::string_view fill,
                       std::string_view stroke) {
  body_ += fmt::format(
      "  <rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\" "
      "stroke=\"{}\"/>\n",
      x, y, w, h, fill, stroke);
}

void SvgDocument::circle(double cx, double cy, double r, std::string_view fill,
                         std::string_view stroke, double stroke_width) {
  body_ += fmt::format(
      "  <circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"{:.2f}\" fill=\"{}\" stroke=\"{}\" "
      "stroke-width=\"{:.2f}\"/>\n",
      cx, cy, r, fill, stroke, stroke_width);
}

void SvgDocument::line(double x1, double y1, double x2, double y2, std::string_view stroke,
                       double stroke_width, std::string_view dash) {
  body_ += fmt::format(
      "  <line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"{}\" "
      "stroke-width=\"{:.2f}\"{}/>\n",
      x1, y1, x2, y2, stroke, stroke_width,
      dash.empty() ? std::string() : fmt::format(" stroke-dasharray=\"{}\"", dash));
}

void SvgDocument::text(double x, double y, std::string_view content, double font_size,
                       std::string_view fill, std::string_view anchor) {
  body_ += fmt::format(
      "  <text x=\"{:.2f}\" y=\"{:.2f}\" font-size=\"{:.1f}\" font-family=\"Helvetica, Arial, "
      "sans-serif\" fill=\"{}\" text-anchor=\"{}\">{}</text>\n",
      x, y, font_size, fill, anchor, xml_escape(content));
}

void SvgDocument::comment(std::string_view content) {
  body_ += fmt::format("  <!-- {} -->\n", content);
}

std::string SvgDocument::str() const {
  return fmt::format(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0:.0f}\" height=\"{1:.0f}\" "
      "viewBox=\"0 0 {0:.0f} {1:.0f}\">\n{2}</svg>\n",
      width_, height_, body_);
}

}  // namespace emoprobe
