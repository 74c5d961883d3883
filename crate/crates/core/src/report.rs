//! Frontier and hypervolume tables and SVG Pareto plots, computed from a
//! results file alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::complexity::ComplexityMetric;
use crate::corpus::TaskKind;
use crate::experiment::ExperimentRecord;
use crate::pareto::{hypervolume, pareto_frontier, ProbePoint, Provenance};

/// Restricts a report to one metric and/or one representation.
#[derive(Clone, Debug, Default)]
pub struct ReportFilter {
    pub metric: Option<ComplexityMetric>,
    pub representation: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct GroupKey {
    pub language: String,
    pub task: TaskKind,
    pub metric: ComplexityMetric,
    pub representation: String,
}

#[derive(Clone, Debug)]
pub struct Group {
    pub points: Vec<ProbePoint>,
    pub c_max: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub body: String,
    /// Requested groups that had no rows.
    pub warnings: Vec<String>,
}

/// Points per `(language, task, metric, representation)`. `c_max` is the
/// largest bound recorded for the group.
pub fn group_records(records: &[ExperimentRecord], filter: &ReportFilter) -> (BTreeMap<GroupKey, Group>, Vec<String>) {
    let mut groups: BTreeMap<GroupKey, Group> = BTreeMap::new();
    for r in records {
        if filter.metric.is_some_and(|m| m != r.complexity_metric)
            || filter.representation.as_ref().is_some_and(|n| *n != r.representation)
        {
            continue;
        }
        let key = GroupKey {
            language: r.language.clone(),
            task: r.task,
            metric: r.complexity_metric,
            representation: r.representation.clone(),
        };
        let g = groups.entry(key).or_insert(Group { points: Vec::new(), c_max: 0.0 });
        g.c_max = g.c_max.max(r.complexity_bound);
        g.points.push(ProbePoint::new(
            r.complexity_value,
            r.reported_accuracy(),
            Provenance {
                task: r.task,
                language: r.language.clone(),
                representation: r.representation.clone(),
                family: r.family,
                probe_id: r.probe_id,
                seed: r.seed,
            },
        ));
    }
    let mut warnings = Vec::new();
    if groups.is_empty() && (filter.metric.is_some() || filter.representation.is_some()) {
        let what = [
            filter.metric.map(|m| format!("metric {m}")),
            filter.representation.as_ref().map(|n| format!("representation {n}")),
        ]
        .into_iter()
        .flatten()
        .collect::<Vec<_>>()
        .join(", ");
        warnings.push(format!("no results for {what}; group omitted"));
    }
    (groups, warnings)
}

pub fn frontier_report(records: &[ExperimentRecord], filter: &ReportFilter) -> Report {
    let (groups, warnings) = group_records(records, filter);
    let mut body = String::from("language,task,metric,representation,family,probe_id,complexity,accuracy\n");
    for (k, g) in &groups {
        for p in pareto_frontier(&g.points).points {
            let _ = writeln!(
                body,
                "{},{},{},{},{},{},{},{}",
                k.language,
                k.task,
                k.metric,
                k.representation,
                p.provenance.family,
                p.provenance.probe_id,
                p.complexity,
                p.accuracy
            );
        }
    }
    Report { body, warnings }
}

pub fn hypervolume_report(records: &[ExperimentRecord], filter: &ReportFilter) -> Report {
    let (groups, warnings) = group_records(records, filter);
    let mut body = String::from("language,task,metric,representation,c_max,hypervolume,points,excluded\n");
    for (k, g) in &groups {
        let hv = hypervolume(&g.points, g.c_max);
        let _ = writeln!(
            body,
            "{},{},{},{},{},{},{},{}",
            k.language, k.task, k.metric, k.representation, hv.c_max, hv.value, hv.point_count, hv.excluded
        );
    }
    Report { body, warnings }
}

type Panels<'a> = BTreeMap<(String, TaskKind, ComplexityMetric), Vec<(&'a GroupKey, &'a Group)>>;

const PANEL_W: f64 = 640.0;
const PANEL_H: f64 = 400.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 60.0;

/// One panel per `(language, task, metric)`, each with a point cloud and
/// frontier staircase per representation.
pub fn plot_report(records: &[ExperimentRecord], filter: &ReportFilter) -> Report {
    let (groups, warnings) = group_records(records, filter);
    let mut panels: Panels = BTreeMap::new();
    for (k, g) in &groups {
        panels.entry((k.language.clone(), k.task, k.metric)).or_default().push((k, g));
    }
    let n = panels.len().max(1) as f64;
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{PANEL_W}" height="{}" viewBox="0 0 {PANEL_W} {}" font-family="sans-serif" font-size="12">"#,
        PANEL_H * n,
        PANEL_H * n
    );
    for (i, ((language, task, metric), reps)) in panels.iter().enumerate() {
        let top = i as f64 * PANEL_H;
        draw_panel(&mut svg, top, language, *task, *metric, reps);
    }
    svg.push_str("</svg>\n");
    Report { body: svg, warnings }
}

fn draw_panel(
    svg: &mut String,
    top: f64,
    language: &str,
    task: TaskKind,
    metric: ComplexityMetric,
    reps: &[(&GroupKey, &Group)],
) {
    let x0 = MARGIN_L;
    let x1 = PANEL_W - MARGIN_R;
    let y0 = top + PANEL_H - MARGIN_B;
    let y1 = top + MARGIN_T;
    let c_bound = reps.iter().map(|(_, g)| g.c_max).fold(0.0, f64::max);
    let c_seen = reps.iter().flat_map(|(_, g)| g.points.iter().map(|p| p.complexity)).fold(0.0, f64::max);
    let x_max = if c_seen > 0.0 { c_bound.max(c_seen) } else { c_bound.max(1.0) };
    let sx = |c: f64| x0 + (c / x_max) * (x1 - x0);
    let sy = |a: f64| y0 - a.clamp(0.0, 1.0) * (y0 - y1);

    let y_label = if task == TaskKind::Parse { "UAS" } else { "accuracy" };
    let x_label = match metric {
        ComplexityMetric::NuclearNorm => "nuclear norm",
        ComplexityMetric::Rank => "rank",
        ComplexityMetric::LabelShuffled => "label-shuffled train accuracy",
        ComplexityMetric::FullyShuffled => "fully shuffled train accuracy",
    };
    let _ = writeln!(svg, r#"<g>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{} {}</text>"#,
        (x0 + x1) / 2.0,
        top + 24.0,
        escape(language),
        task
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    for k in 0..=5 {
        let f = k as f64 / 5.0;
        let (x, y) = (sx(f * x_max), sy(f));
        let _ = writeln!(svg, r#"<line x1="{x}" y1="{y0}" x2="{x}" y2="{}" stroke="black"/>"#, y0 + 5.0);
        let _ = writeln!(svg, r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#, y0 + 18.0, tick(f * x_max));
        let _ = writeln!(svg, r#"<line x1="{}" y1="{y}" x2="{x0}" y2="{y}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, x0 - 8.0, y + 4.0, tick(f));
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, (x0 + x1) / 2.0, y0 + 40.0);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" transform="rotate(-90 {} {})">{y_label}</text>"#,
        x0 - 45.0,
        (y0 + y1) / 2.0,
        x0 - 45.0,
        (y0 + y1) / 2.0
    );
    if c_bound < x_max {
        let x = sx(c_bound);
        let _ = writeln!(svg, r#"<line x1="{x}" y1="{y0}" x2="{x}" y2="{y1}" stroke="gray" stroke-dasharray="4 3"/>"#);
    }

    for (i, (key, group)) in reps.iter().enumerate() {
        let color = color_for(&key.representation);
        let _ = writeln!(svg, r#"<g fill="{color}" stroke="{color}">"#);
        for p in &group.points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill-opacity="0.5" stroke="none"/>"#,
                sx(p.complexity),
                sy(p.accuracy)
            );
        }
        let frontier = pareto_frontier(&group.points);
        if let Some(first) = frontier.points.first() {
            let mut d = format!("M {:.2} {:.2}", sx(first.complexity), sy(first.accuracy));
            for w in frontier.points.windows(2) {
                let _ = write!(d, " H {:.2} V {:.2}", sx(w[1].complexity), sy(w[1].accuracy));
            }
            let _ = write!(d, " H {:.2}", x1);
            let _ = writeln!(svg, r#"<path d="{d}" fill="none" stroke-width="2"/>"#);
        }
        let ly = y1 + 10.0 + 18.0 * i as f64;
        let _ = writeln!(svg, r#"<rect x="{}" y="{}" width="12" height="12" stroke="none"/>"#, x1 + 15.0, ly - 10.0);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{ly}" stroke="none" fill="black">{}</text>"#,
            x1 + 32.0,
            escape(&key.representation)
        );
        let _ = writeln!(svg, "</g>");
    }
    let _ = writeln!(svg, "</g>");
}

fn tick(v: f64) -> String {
    if v == v.round() && v.abs() < 1e6 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Stable color for a representation name (FNV-1a hash mapped to a hue).
pub fn color_for(name: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let hue = (h % 360) as f64;
    let (s, l) = (0.65, 0.42);
    let c = (1.0 - (2.0 * l - 1.0f64).abs()) * s;
    let hp = hue / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    let to = |v: f64| ((v + m) * 255.0).round() as u8;
    format!("#{:02x}{:02x}{:02x}", to(r), to(g), to(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::SCHEMA_VERSION;
    use crate::training::Family;

    fn rec(rep: &str, id: usize, c: f64, acc: f64, metric: ComplexityMetric, bound: f64) -> ExperimentRecord {
        ExperimentRecord {
            schema_version: SCHEMA_VERSION,
            language: "en".into(),
            task: TaskKind::Posl,
            representation: rep.into(),
            family: Family::LinearNuclear,
            probe_id: id,
            lambda: Some(0.0),
            rank: None,
            layers: None,
            hidden: None,
            dropout: None,
            complexity_metric: metric,
            complexity_value: c,
            complexity_bound: bound,
            train_accuracy: 0.0,
            dev_accuracy: None,
            test_accuracy: Some(acc),
            seed: 0,
        }
    }

    #[test]
    fn hypervolume_table_uses_recorded_bound() {
        let records = vec![
            rec("a", 0, 200.0, 0.8, ComplexityMetric::NuclearNorm, 400.0),
            rec("b", 0, 100.0, 0.5, ComplexityMetric::NuclearNorm, 400.0),
        ];
        let r = hypervolume_report(&records, &ReportFilter::default());
        let lines: Vec<&str> = r.body.lines().collect();
        assert_eq!(lines[1], "en,posl,nuclear-norm,a,400,0.4,1,0");
        assert_eq!(lines[2], "en,posl,nuclear-norm,b,400,0.375,1,0");
    }

    #[test]
    fn frontier_table_lists_non_dominated_points() {
        let records = vec![
            rec("a", 0, 1.0, 0.9, ComplexityMetric::NuclearNorm, 400.0),
            rec("a", 1, 2.0, 0.95, ComplexityMetric::NuclearNorm, 400.0),
            rec("a", 2, 3.0, 0.8, ComplexityMetric::NuclearNorm, 400.0),
        ];
        let r = frontier_report(&records, &ReportFilter::default());
        assert_eq!(r.body.lines().count(), 3);
    }

    #[test]
    fn empty_requested_group_warns() {
        let records = vec![rec("a", 0, 1.0, 0.9, ComplexityMetric::NuclearNorm, 400.0)];
        let filter = ReportFilter { metric: Some(ComplexityMetric::Rank), representation: None };
        let r = hypervolume_report(&records, &filter);
        assert_eq!(r.body.lines().count(), 1);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn colors_are_stable_hex() {
        assert_eq!(color_for("bert"), color_for("bert"));
        let c = color_for("fasttext");
        assert!(c.starts_with('#') && c.len() == 7);
    }
}
