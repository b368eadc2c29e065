//! Static SVG bar chart of the suspicious-neuron layer distribution.

use std::collections::BTreeMap;

const WIDTH: usize = 640;
const HEIGHT: usize = 360;
const MARGIN: usize = 48;

/// Renders one bar per hidden layer, labelled with the layer number and count.
pub fn layer_distribution_chart(counts: &BTreeMap<usize, usize>) -> String {
    let max_count = counts.values().copied().max().unwrap_or(0).max(1);
    let plot_w = WIDTH - 2 * MARGIN;
    let plot_h = HEIGHT - 2 * MARGIN;
    let n = counts.len().max(1);
    let slot = plot_w / n;
    let bar_w = (slot * 7 / 10).max(1);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">Suspicious neurons per hidden layer</text>\n",
        WIDTH / 2
    ));
    // axes
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    ));
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN
    ));

    for (i, (layer, &count)) in counts.iter().enumerate() {
        let h = plot_h * count / max_count;
        let x = MARGIN + i * slot + (slot - bar_w) / 2;
        let y = HEIGHT - MARGIN - h;
        svg.push_str(&format!(
            "<rect x=\"{x}\" y=\"{y}\" width=\"{bar_w}\" height=\"{h}\" fill=\"#4878a8\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{cx}\" y=\"{ly}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{layer}</text>\n",
            cx = x + bar_w / 2,
            ly = HEIGHT - MARGIN + 16
        ));
        svg.push_str(&format!(
            "<text x=\"{cx}\" y=\"{vy}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{count}</text>\n",
            cx = x + bar_w / 2,
            vy = y.saturating_sub(4).max(MARGIN)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{cx}\" y=\"{by}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">hidden layer</text>\n",
        cx = WIDTH / 2,
        by = HEIGHT - 10
    ));
    svg.push_str("</svg>\n");
    svg
}
