//! Figures from a results directory: PD and chance heatmaps with radar
//! markers, roadmaps and trajectories as PNG, and sweep summaries as SVG.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use radarnav::bspline::BSplineTrajectory;
use radarnav::config::Config;
use radarnav::estimator::RadarEstimate;
use radarnav::geometry::{Position2, Region};
use radarnav::pd_uncertainty::{chance_at, KnownParamBelief, UnknownPrior};
use radarnav::radar::{pd_overall_params, DetectionParams, RadarTruth};
use radarnav::roadmap::{build_generalized_diagram, build_weighted_diagram, RoadmapGraph, WeightedSite};
use radarnav::sim::{read_log, LogRecord, PlannerMode};

use crate::experiment::{median, summarize_agents, summarize_baseline, summarize_ternary, ExperimentKind, Manifest};
use crate::records::load_rows;

/// Invertible 256-step color scale from black through blue, cyan and green
/// to yellow. White and magenta are left free for overlays.
#[derive(Debug, Clone)]
pub struct Colormap {
    lut: Vec<[u8; 3]>,
}

impl Default for Colormap {
    fn default() -> Self {
        let anchors: [[f64; 3]; 5] = [[0.0, 0.0, 0.0], [0.0, 0.0, 252.0], [0.0, 252.0, 252.0], [0.0, 252.0, 0.0], [252.0, 252.0, 0.0]];
        let lut = (0..256)
            .map(|k| {
                let x = k as f64 / 255.0 * 4.0;
                let seg = (x.floor() as usize).min(3);
                let f = x - seg as f64;
                let (a, b) = (anchors[seg], anchors[seg + 1]);
                [0, 1, 2].map(|c| (a[c] + f * (b[c] - a[c])).round() as u8)
            })
            .collect();
        Self { lut }
    }
}

impl Colormap {
    /// Color of `v`, clamped to `[0, 1]`.
    pub fn encode(&self, v: f64) -> [u8; 3] {
        self.lut[(v.clamp(0.0, 1.0) * 255.0).round() as usize]
    }

    /// Value of a scale color, `None` for overlay colors.
    pub fn decode(&self, c: [u8; 3]) -> Option<f64> {
        self.lut.iter().position(|&x| x == c).map(|k| k as f64 / 255.0)
    }
}

pub const MARKER: [u8; 3] = [255, 255, 255];
pub const PATH: [u8; 3] = [255, 0, 255];
pub const ROADMAP: [u8; 3] = [255, 128, 0];

/// RGB raster covering a region, row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub region: Region,
    pub pixels: Vec<[u8; 3]>,
}

impl Raster {
    /// World coordinate of the center of pixel `(col, row)`.
    pub fn pixel_center(&self, col: usize, row: usize) -> Position2 {
        let r = &self.region;
        Position2::new(
            r.lower.x + (col as f64 + 0.5) * r.width() / self.width as f64,
            r.upper.y - (row as f64 + 0.5) * r.height() / self.height as f64,
        )
    }

    /// Pixel containing `p`, if inside.
    pub fn pixel_of(&self, p: Position2) -> Option<(usize, usize)> {
        let r = &self.region;
        let col = ((p.x - r.lower.x) / r.width() * self.width as f64).floor();
        let row = ((r.upper.y - p.y) / r.height() * self.height as f64).floor();
        (col >= 0.0 && row >= 0.0 && (col as usize) < self.width && (row as usize) < self.height).then(|| (col as usize, row as usize))
    }

    pub fn get(&self, col: usize, row: usize) -> [u8; 3] {
        self.pixels[row * self.width + col]
    }

    fn set(&mut self, p: Position2, c: [u8; 3]) {
        if let Some((col, row)) = self.pixel_of(p) {
            self.pixels[row * self.width + col] = c;
        }
    }

    /// Scalar field sampled at pixel centers.
    pub fn field(region: Region, width: usize, height: usize, cmap: &Colormap, f: impl Fn(Position2) -> f64) -> Self {
        let mut r = Self { width, height, region, pixels: Vec::with_capacity(width * height) };
        for row in 0..height {
            for col in 0..width {
                let v = f(r.pixel_center(col, row));
                r.pixels.push(cmap.encode(v));
            }
        }
        r
    }

    /// Polyline drawn with a sample every half pixel.
    pub fn draw_polyline(&mut self, pts: &[Position2], c: [u8; 3]) {
        let step = 0.5 * self.region.width() / self.width as f64;
        for w in pts.windows(2) {
            let n = (w[0].distance(w[1]) / step).ceil().max(1.0) as usize;
            for k in 0..=n {
                self.set(w[0].lerp(w[1], k as f64 / n as f64), c);
            }
        }
    }

    /// Plus-shaped marker.
    pub fn draw_marker(&mut self, p: Position2, c: [u8; 3]) {
        let px = self.region.width() / self.width as f64;
        for k in -3..=3 {
            self.set(p + Position2::new(k as f64 * px, 0.0), c);
            self.set(p + Position2::new(0.0, k as f64 * px), c);
        }
    }

    pub fn draw_roadmap(&mut self, g: &RoadmapGraph) {
        for e in &g.edges {
            self.draw_polyline(&e.geometry.sample(32), ROADMAP);
        }
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header()?;
        let data: Vec<u8> = self.pixels.iter().flat_map(|p| p.iter().copied()).collect();
        w.write_image_data(&data)?;
        Ok(())
    }
}

/// Ground-truth PD over the region.
pub fn pd_heatmap(radars: &[RadarTruth], sigma: f64, region: Region, size: usize) -> Raster {
    let det: Vec<DetectionParams> = radars.iter().map(RadarTruth::detection).collect();
    Raster::field(region, size, size, &Colormap::default(), |p| pd_overall_params(sigma, p, &det).unwrap_or(1.0))
}

/// Probability that the PD stays below `p_dt` under the estimate belief.
pub fn chance_heatmap(
    estimates: &[RadarEstimate],
    prior: &UnknownPrior,
    known: &KnownParamBelief,
    p_dt: f64,
    region: Region,
    size: usize,
) -> Raster {
    Raster::field(region, size, size, &Colormap::default(), |p| chance_at(&known.at(p), prior, estimates, p_dt).unwrap_or(0.0))
}

/// Data of one logged mission needed for its figures.
struct MissionView {
    radars: Vec<RadarTruth>,
    dispatch: Option<(BSplineTrajectory, Vec<RadarEstimate>)>,
}

fn mission_view(records: &[LogRecord]) -> Option<MissionView> {
    let mut radars = None;
    let mut dispatch = None;
    for r in records {
        match r {
            LogRecord::Start { radars: rs, .. } => radars = Some(rs.clone()),
            LogRecord::Dispatch { trajectory, estimates, .. } => dispatch = Some((trajectory.clone(), estimates.clone())),
            _ => {}
        }
    }
    Some(MissionView { radars: radars?, dispatch })
}

/// Heatmaps of one mission: truth PD with the known-radar roadmap, and,
/// when a path was dispatched, the chance field with the generalized
/// roadmap. Both carry radar markers and the trajectory.
pub fn render_mission(records: &[LogRecord], cfg: &Config, size: usize, stem: &Path) -> Result<Vec<PathBuf>> {
    let Some(view) = mission_view(records) else {
        log::warn!("log {} has no start record; skipped", stem.display());
        return Ok(Vec::new());
    };
    let sc = &cfg.scenario;
    let region = sc.region;
    let path = view.dispatch.as_ref().map(|(t, _)| t.sample_polyline(400));
    let mut out = Vec::new();

    let mut pd = pd_heatmap(&view.radars, sc.sigma, region, size);
    let sites: Vec<WeightedSite> = view.radars.iter().map(|r| WeightedSite::from_detection(&r.detection(), sc.sigma)).collect();
    if let Ok(g) = build_weighted_diagram(&sites, &region) {
        pd.draw_roadmap(&g);
    }
    for r in &view.radars {
        pd.draw_marker(r.position, MARKER);
    }
    if let Some(p) = &path {
        pd.draw_polyline(p, PATH);
    }
    let file = stem.with_file_name(format!("{}_pd.png", stem.file_name().unwrap_or_default().to_string_lossy()));
    pd.write_png(&file)?;
    out.push(file);

    if let Some((_, estimates)) = &view.dispatch {
        let prior = UnknownPrior::from_ranges(&sc.radar);
        let known = KnownParamBelief::new(sc.sigma, cfg.mission.start, cfg.sim.rcs_std, cfg.sim.position_std);
        let mut ch = chance_heatmap(estimates, &prior, &known, cfg.mission.p_dt, region, size);
        if let Ok(g) = build_generalized_diagram(&region, cfg.hp.grid_n, &known, &prior, estimates, cfg.mission.p_dt) {
            ch.draw_roadmap(&g);
        }
        for e in estimates {
            ch.draw_marker(e.position(), MARKER);
        }
        if let Some(p) = &path {
            ch.draw_polyline(p, PATH);
        }
        let file = stem.with_file_name(format!("{}_chance.png", stem.file_name().unwrap_or_default().to_string_lossy()));
        ch.write_png(&file)?;
        out.push(file);
    }
    Ok(out)
}

fn svg_open(w: f64, h: f64) -> String {
    format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n")
}

fn rgb(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Success rate of each weight triple on the simplex.
pub fn ternary_svg(rows: &[crate::experiment::TernaryRow]) -> String {
    let (w, h) = (520.0, 480.0);
    let corner = [(260.0, 40.0), (40.0, 420.0), (480.0, 420.0)];
    let to_xy = |a: [f64; 3]| {
        let x = a[0] * corner[0].0 + a[1] * corner[1].0 + a[2] * corner[2].0;
        let y = a[0] * corner[0].1 + a[1] * corner[1].1 + a[2] * corner[2].1;
        (x, y)
    };
    let cmap = Colormap::default();
    let mut s = svg_open(w, h);
    let _ = writeln!(
        s,
        "<polygon points=\"{},{} {},{} {},{}\" fill=\"none\" stroke=\"black\"/>",
        corner[0].0, corner[0].1, corner[1].0, corner[1].1, corner[2].0, corner[2].1
    );
    for (label, (x, y)) in ["α_e", "α_u", "α_s"].iter().zip(corner) {
        let _ = writeln!(s, "<text x=\"{x}\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\">{label}</text>", if y < 100.0 { y - 12.0 } else { y + 24.0 });
    }
    for r in rows {
        let (x, y) = to_xy([r.alpha_e, r.alpha_u, r.alpha_s]);
        let _ = writeln!(
            s,
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"9\" fill=\"{}\" stroke=\"black\"><title>{:.0}% of {}</title></circle>",
            rgb(cmap.encode(r.success_rate)),
            100.0 * r.success_rate,
            r.runs
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Box plots of time to path for each scout strategy.
pub fn box_plot_svg(groups: &[(&str, Vec<f64>)]) -> String {
    let (w, h) = (160.0 * groups.len().max(1) as f64 + 80.0, 420.0);
    let top = groups.iter().flat_map(|g| g.1.iter().copied()).fold(1.0, f64::max);
    let y = |v: f64| 380.0 - 340.0 * v / top;
    let mut s = svg_open(w, h);
    let _ = writeln!(s, "<line x1=\"60\" y1=\"40\" x2=\"60\" y2=\"380\" stroke=\"black\"/>");
    let _ = writeln!(s, "<text x=\"55\" y=\"44\" font-size=\"11\" text-anchor=\"end\">{top:.0} s</text>");
    let _ = writeln!(s, "<text x=\"55\" y=\"384\" font-size=\"11\" text-anchor=\"end\">0 s</text>");
    for (k, (name, v)) in groups.iter().enumerate() {
        let cx = 140.0 + 160.0 * k as f64;
        let _ = writeln!(s, "<text x=\"{cx}\" y=\"405\" font-size=\"13\" text-anchor=\"middle\">{name} (n={})</text>", v.len());
        let Some(med) = median(v) else { continue };
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        let lower: Vec<f64> = sorted[..sorted.len() / 2].to_vec();
        let upper: Vec<f64> = sorted[sorted.len().div_ceil(2)..].to_vec();
        let q1 = median(&lower).unwrap_or(med);
        let q3 = median(&upper).unwrap_or(med);
        let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
        let _ = writeln!(s, "<line x1=\"{cx}\" y1=\"{:.2}\" x2=\"{cx}\" y2=\"{:.2}\" stroke=\"black\"/>", y(lo), y(hi));
        let _ = writeln!(
            s,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"60\" height=\"{:.2}\" fill=\"#9ecae1\" stroke=\"black\"/>",
            cx - 30.0,
            y(q3),
            (y(q1) - y(q3)).max(0.5)
        );
        let _ = writeln!(s, "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\" stroke-width=\"2\"/>", cx - 30.0, y(med), cx + 30.0, y(med));
    }
    s.push_str("</svg>\n");
    s
}

/// Mean time to path with one-standard-deviation bars per scout count.
pub fn agents_svg(rows: &[crate::experiment::AgentRow]) -> String {
    let (w, h) = (520.0, 420.0);
    let pts: Vec<(usize, f64, f64)> = rows.iter().filter_map(|r| Some((r.n_l, r.mean_t_found?, r.std_t_found.unwrap_or(0.0)))).collect();
    let top = pts.iter().map(|p| p.1 + p.2).fold(1.0, f64::max);
    let n_max = pts.iter().map(|p| p.0).max().unwrap_or(1) as f64;
    let x = |n: usize| 60.0 + 420.0 * n as f64 / n_max;
    let y = |v: f64| 380.0 - 340.0 * v / top;
    let mut s = svg_open(w, h);
    let _ = writeln!(s, "<line x1=\"60\" y1=\"380\" x2=\"490\" y2=\"380\" stroke=\"black\"/>");
    let _ = writeln!(s, "<line x1=\"60\" y1=\"40\" x2=\"60\" y2=\"380\" stroke=\"black\"/>");
    let _ = writeln!(s, "<text x=\"55\" y=\"44\" font-size=\"11\" text-anchor=\"end\">{top:.0} s</text>");
    let line: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", x(p.0), y(p.1))).collect();
    let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"#3182bd\" stroke-width=\"2\"/>", line.join(" "));
    for (n, m, sd) in &pts {
        let _ = writeln!(s, "<line x1=\"{0:.2}\" y1=\"{1:.2}\" x2=\"{0:.2}\" y2=\"{2:.2}\" stroke=\"black\"/>", x(*n), y(m - sd), y(m + sd));
        let _ = writeln!(s, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"#3182bd\"/>", x(*n), y(*m));
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"398\" font-size=\"12\" text-anchor=\"middle\">{n}</text>", x(*n));
    }
    s.push_str("</svg>\n");
    s
}

/// Renders every figure the results in `dir` support into `dir/plots`.
/// Missing data only skips the affected figure, with a warning.
pub fn render(dir: &Path, size: usize) -> Result<Vec<PathBuf>> {
    let manifest = match Manifest::load(dir) {
        Ok(m) => m,
        Err(e) => {
            log::warn!("no results to render in {}: {e:#}", dir.display());
            return Ok(Vec::new());
        }
    };
    let rows = load_rows(dir, &manifest)?;
    if rows.is_empty() {
        log::warn!("no completed missions in {}", dir.display());
        return Ok(Vec::new());
    }
    let plots = dir.join("plots");
    fs::create_dir_all(&plots)?;
    let mut out = Vec::new();

    for e in manifest.entries.iter().filter(|e| e.experiment == ExperimentKind::Single && e.error.is_none()) {
        let text = fs::read_to_string(dir.join(&e.log))?;
        out.extend(render_mission(&read_log(&text)?, &manifest.config_for(e), size, &plots.join(&e.id))?);
    }

    let ternary = summarize_ternary(&rows);
    if !ternary.is_empty() {
        let p = plots.join("ternary.svg");
        fs::write(&p, ternary_svg(&ternary))?;
        out.push(p);
    }
    let baseline = summarize_baseline(&rows);
    if !baseline.is_empty() {
        let ours: Vec<f64> = baseline.iter().filter_map(|b| b.ours_t_found).collect();
        let lawn: Vec<f64> = baseline.iter().filter_map(|b| b.lawnmower_t_found).collect();
        let p = plots.join("baseline.svg");
        fs::write(&p, box_plot_svg(&[(mode_label(PlannerMode::Ours), ours), (mode_label(PlannerMode::Lawnmower), lawn)]))?;
        out.push(p);
    }
    let agents = summarize_agents(&rows);
    if !agents.is_empty() {
        let p = plots.join("agents.svg");
        fs::write(&p, agents_svg(&agents))?;
        out.push(p);
    }
    if out.is_empty() {
        log::warn!("results in {} support no figures", dir.display());
    }
    Ok(out)
}

/// Mode label used in figure names.
pub fn mode_label(mode: PlannerMode) -> &'static str {
    match mode {
        PlannerMode::Ours => "objective",
        PlannerMode::Lawnmower => "lawnmower",
    }
}
