#include "spg/render.hpp"

#include "spg/core/errors.hpp"

#include <cstdio>
#include <sstream>

namespace spg {

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
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

void draw_layer(std::ostringstream& out, const char* id, const char* style, const Pose2D& pose, const Skeleton& skel) {
  check_joint_count("render_svg", pose.rows(), skel);
  out << "  <g id=\"" << id << "\" " << style << ">\n";
  for (int c : skel.child_joints()) {
    const int p = skel.parent(c);
    char line[200];
    std::snprintf(line, sizeof line, "    <line x1=\"%.3f\" y1=\"%.3f\" x2=\"%.3f\" y2=\"%.3f\"/>\n", pose(p, 0), pose(p, 1),
                  pose(c, 0), pose(c, 1));
    out << line;
  }
  out << "  </g>\n";
}

}  // namespace

std::string render_svg(const RenderLayers& layers, const Skeleton& skel, int width, int height) {
  if (width <= 0 || height <= 0) throw ContractError("render_svg: canvas size must be positive");
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\" viewBox=\"0 0 "
      << width << ' ' << height << "\">\n"
      << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "  <text x=\"10\" y=\"20\" font-family=\"monospace\" font-size=\"14\">" << xml_escape(layers.title) << "</text>\n"
      << "  <text x=\"10\" y=\"40\" font-family=\"monospace\" font-size=\"12\">black solid: 2D input; red dashed: "
      << xml_escape(layers.prediction_label) << "; blue dotted: ground truth</text>\n";
  draw_layer(out, "input", "stroke=\"black\" stroke-width=\"3\" fill=\"none\"", layers.input, skel);
  draw_layer(out, "prediction", "stroke=\"red\" stroke-width=\"2\" stroke-dasharray=\"8 4\" fill=\"none\"",
             layers.prediction, skel);
  draw_layer(out, "ground_truth", "stroke=\"blue\" stroke-width=\"2\" stroke-dasharray=\"2 3\" fill=\"none\"",
             layers.truth, skel);
  out << "</svg>\n";
  return out.str();
}

}  // namespace spg
