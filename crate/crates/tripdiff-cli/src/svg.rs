//! Minimal self-contained SVG rendering for event-study curves.
//!
//! No plotting dependency: the chart is a fixed-layout scatter with error
//! bars, written as a deterministic string so repeated runs produce
//! identical files.

/// One plotted point; `k < 0` marks held-out placebo estimates.
#[derive(Debug, Clone, Copy)]
pub struct SvgPoint {
    pub k: i64,
    pub estimate: Option<f64>,
    pub ci: Option<(f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 45.0;

fn fmt(x: f64) -> String {
    format!("{x:.4}")
}

/// Render the merged placebo + post-treatment curve.
///
/// Post-treatment points (`k >= 0`) are filled circles; placebo points are
/// hollow diamonds, separated from the post region by a vertical rule at
/// the adoption boundary.
pub fn render_event_study(points: &[SvgPoint]) -> String {
    let plotted: Vec<&SvgPoint> = points.iter().filter(|p| p.estimate.is_some()).collect();
    let (k_min, k_max) = points
        .iter()
        .fold((i64::MAX, i64::MIN), |(lo, hi), p| (lo.min(p.k), hi.max(p.k)));
    let (k_min, k_max) = if points.is_empty() { (-1, 1) } else { (k_min, k_max) };
    let mut y_lo = 0.0f64;
    let mut y_hi = 0.0f64;
    for p in &plotted {
        let e = p.estimate.unwrap();
        let (lo, hi) = p.ci.unwrap_or((e, e));
        y_lo = y_lo.min(lo);
        y_hi = y_hi.max(hi);
    }
    let pad = (y_hi - y_lo).max(1e-9) * 0.1;
    let (y_lo, y_hi) = (y_lo - pad, y_hi + pad);

    let x_of = |k: i64| -> f64 {
        let span = (k_max - k_min).max(1) as f64;
        MARGIN_L + (k - k_min) as f64 / span * (WIDTH - MARGIN_L - MARGIN_R)
    };
    let y_of = |v: f64| -> f64 {
        MARGIN_T + (y_hi - v) / (y_hi - y_lo) * (HEIGHT - MARGIN_T - MARGIN_B)
    };

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    // Axes.
    out.push_str(&format!(
        "  <line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
        l = MARGIN_L,
        r = WIDTH - MARGIN_R,
        b = HEIGHT - MARGIN_B
    ));
    out.push_str(&format!(
        "  <line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"black\"/>\n",
        l = MARGIN_L,
        t = MARGIN_T,
        b = HEIGHT - MARGIN_B
    ));
    // Zero reference.
    if y_lo < 0.0 && y_hi > 0.0 {
        out.push_str(&format!(
            "  <line x1=\"{l}\" y1=\"{y}\" x2=\"{r}\" y2=\"{y}\" stroke=\"gray\" \
             stroke-dasharray=\"4 3\"/>\n",
            l = MARGIN_L,
            r = WIDTH - MARGIN_R,
            y = fmt(y_of(0.0))
        ));
    }
    // Adoption boundary between the placebo and post regions.
    if k_min < 0 && k_max >= 0 {
        let x = (x_of(-1) + x_of(0)) / 2.0;
        out.push_str(&format!(
            "  <line x1=\"{x}\" y1=\"{t}\" x2=\"{x}\" y2=\"{b}\" stroke=\"gray\" \
             stroke-dasharray=\"2 3\"/>\n",
            x = fmt(x),
            t = MARGIN_T,
            b = HEIGHT - MARGIN_B
        ));
    }
    for p in points {
        let x = x_of(p.k);
        // Tick and label.
        out.push_str(&format!(
            "  <text x=\"{x}\" y=\"{y}\" font-size=\"11\" text-anchor=\"middle\">{k}</text>\n",
            x = fmt(x),
            y = HEIGHT - MARGIN_B + 16.0,
            k = p.k
        ));
        let Some(e) = p.estimate else { continue };
        if let Some((lo, hi)) = p.ci {
            out.push_str(&format!(
                "  <line x1=\"{x}\" y1=\"{y1}\" x2=\"{x}\" y2=\"{y2}\" stroke=\"#555555\"/>\n",
                x = fmt(x),
                y1 = fmt(y_of(lo)),
                y2 = fmt(y_of(hi))
            ));
        }
        if p.k >= 0 {
            out.push_str(&format!(
                "  <circle cx=\"{x}\" cy=\"{y}\" r=\"4\" fill=\"#1f6fb5\"/>\n",
                x = fmt(x),
                y = fmt(y_of(e))
            ));
        } else {
            let (cx, cy) = (x, y_of(e));
            out.push_str(&format!(
                "  <path d=\"M {x1} {cy} L {cx} {y1} L {x2} {cy} L {cx} {y2} Z\" \
                 fill=\"white\" stroke=\"#d06020\"/>\n",
                x1 = fmt(cx - 5.0),
                x2 = fmt(cx + 5.0),
                y1 = fmt(cy - 5.0),
                y2 = fmt(cy + 5.0),
                cx = fmt(cx),
                cy = fmt(cy)
            ));
        }
    }
    // Axis labels and y-range annotations.
    out.push_str(&format!(
        "  <text x=\"{x}\" y=\"{y}\" font-size=\"12\" text-anchor=\"middle\">event time k</text>\n",
        x = fmt((MARGIN_L + WIDTH - MARGIN_R) / 2.0),
        y = HEIGHT - 8.0
    ));
    out.push_str(&format!(
        "  <text x=\"{x}\" y=\"{y}\" font-size=\"11\" text-anchor=\"end\">{v}</text>\n",
        x = MARGIN_L - 6.0,
        y = fmt(y_of(y_hi) + 4.0),
        v = fmt(y_hi)
    ));
    out.push_str(&format!(
        "  <text x=\"{x}\" y=\"{y}\" font-size=\"11\" text-anchor=\"end\">{v}</text>\n",
        x = MARGIN_L - 6.0,
        y = fmt(y_of(y_lo) + 4.0),
        v = fmt(y_lo)
    ));
    out.push_str("</svg>\n");
    out
}
