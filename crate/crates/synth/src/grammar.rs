//! Templated referring expressions, their parser, and an exhaustive referent matcher.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SynthError};
use crate::world::{Color, Scene, Shape, POOL, WORKSPACE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateClass {
    Abs,
    Rel,
    AttrBase,
    AttrCls,
}

impl TemplateClass {
    pub const ALL: [TemplateClass; 4] = [
        TemplateClass::Abs,
        TemplateClass::Rel,
        TemplateClass::AttrBase,
        TemplateClass::AttrCls,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateClass::Abs => "abs",
            TemplateClass::Rel => "rel",
            TemplateClass::AttrBase => "attr_base",
            TemplateClass::AttrCls => "attr_cls",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        TemplateClass::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| SynthError::Input(format!("unknown template class {s:?}")))
    }
}

pub const ROWS: [&str; 3] = ["top", "middle", "bottom"];
pub const COLS: [&str; 3] = ["left", "center", "right"];
/// Minimum distance of an absolute-template centroid from a grid line.
pub const REGION_EDGE_MARGIN: f64 = 2.0;
/// Minimum centroid distance between target and reference.
pub const REFERENCE_MIN_DIST: f64 = 30.0;
/// Minimum angular distance of a relative-template direction from a sector edge.
pub const SECTOR_EDGE_MARGIN_DEG: f64 = 5.0;

/// Compass sectors, counter-clockwise on screen starting at "right".
pub const RELATIONS: [&str; 8] = [
    "to the right of",
    "to the upper right of",
    "above",
    "to the upper left of",
    "to the left of",
    "to the lower left of",
    "below",
    "to the lower right of",
];

const VERBS: [&str; 4] = ["pick up", "grasp", "grab", "give me"];

/// Grid cell `(row, col)` of a native point.
pub fn region_of(u: f64, v: f64) -> (usize, usize) {
    let cell = WORKSPACE as f64 / 3.0;
    let idx = |t: f64| ((t / cell).floor() as isize).clamp(0, 2) as usize;
    (idx(v), idx(u))
}

/// Distance from the nearest interior grid line.
pub fn region_edge_distance(u: f64, v: f64) -> f64 {
    let cell = WORKSPACE as f64 / 3.0;
    [cell, 2.0 * cell]
        .iter()
        .flat_map(|&g| [(u - g).abs(), (v - g).abs()])
        .fold(f64::INFINITY, f64::min)
}

/// Screen-space angle (degrees, counter-clockwise with y up) from `a` to `b`.
fn screen_angle(a: (f64, f64), b: (f64, f64)) -> f64 {
    (-(b.1 - a.1)).atan2(b.0 - a.0).to_degrees().rem_euclid(360.0)
}

/// Sector index of `b` as seen from `a`, per [`RELATIONS`].
pub fn sector_of(a: (f64, f64), b: (f64, f64)) -> usize {
    (((screen_angle(a, b) + 22.5) / 45.0).floor() as usize) % 8
}

fn sector_edge_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    let t = (screen_angle(a, b) + 22.5).rem_euclid(45.0);
    t.min(45.0 - t)
}

/// Lowercases, replaces punctuation with spaces, and splits on whitespace.
pub fn normalize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

/// Constraints expressed by a sentence.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Query {
    pub color: Option<Color>,
    pub shape: Option<Shape>,
    pub category: Option<String>,
    pub region: Option<(usize, usize)>,
    /// `(sector, reference color, reference category)`.
    pub relation: Option<(usize, Color, String)>,
}

/// Every object satisfying `q`, in scene order.
pub fn referents(scene: &Scene, q: &Query) -> Vec<usize> {
    let reference = match &q.relation {
        Some((_, color, cat)) => {
            let refs: Vec<usize> = (0..scene.objects.len())
                .filter(|&i| {
                    let k = scene.objects[i].kind();
                    k.color == *color && k.category == cat
                })
                .collect();
            if refs.len() != 1 {
                return vec![];
            }
            Some(refs[0])
        }
        None => None,
    };
    (0..scene.objects.len())
        .filter(|&i| {
            let o = &scene.objects[i];
            let k = o.kind();
            if q.color.is_some_and(|c| c != k.color)
                || q.shape.is_some_and(|s| s != k.shape)
                || q.category.as_deref().is_some_and(|c| c != k.category)
            {
                return false;
            }
            if let Some(r) = q.region {
                let (u, v) = o.centroid();
                if region_of(u, v) != r {
                    return false;
                }
            }
            if let (Some((sector, _, _)), Some(r)) = (&q.relation, reference) {
                if r == i || sector_of(scene.objects[r].centroid(), o.centroid()) != *sector {
                    return false;
                }
            }
            true
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Expression {
    pub text: String,
    pub class: TemplateClass,
    pub target: usize,
}

fn categories() -> Vec<&'static str> {
    let mut c: Vec<&str> = POOL.iter().map(|k| k.category).collect();
    c.sort_unstable();
    c.dedup();
    c
}

/// All words the generator can emit, sorted.
pub fn lexicon() -> Vec<String> {
    let mut words: Vec<String> = Vec::new();
    let mut add = |s: &str| words.extend(normalize(s));
    for v in VERBS {
        add(v);
    }
    for r in RELATIONS {
        add(r);
    }
    for w in ROWS.iter().chain(COLS.iter()) {
        add(w);
    }
    for c in Color::ALL {
        add(c.name());
    }
    for s in Shape::ALL {
        add(s.noun());
        add(s.adjective());
    }
    for c in categories() {
        add(c);
    }
    add("the pass me that is to of workspace grasp me");
    words.sort();
    words.dedup();
    words
}

/// Writes an expression of `class` with a unique referent, trying targets in random order.
pub fn gen_expression<R: Rng + ?Sized>(scene: &Scene, class: TemplateClass, rng: &mut R) -> Result<Expression> {
    let mut order: Vec<usize> = (0..scene.objects.len()).collect();
    order.shuffle(rng);
    let verb = *VERBS.choose(rng).unwrap();
    let abs_form = rng.gen_bool(0.5);
    for &t in &order {
        let o = &scene.objects[t];
        let k = o.kind();
        let (text, q) = match class {
            TemplateClass::AttrBase => (
                format!("{verb} the {} {}", k.color.name(), k.shape.noun()),
                Query {
                    color: Some(k.color),
                    shape: Some(k.shape),
                    ..Query::default()
                },
            ),
            TemplateClass::AttrCls => (
                format!("{verb} the {} {} {}", k.color.name(), k.shape.adjective(), k.category),
                Query {
                    color: Some(k.color),
                    shape: Some(k.shape),
                    category: Some(k.category.to_owned()),
                    ..Query::default()
                },
            ),
            TemplateClass::Abs => {
                let (u, v) = o.centroid();
                if region_edge_distance(u, v) < REGION_EDGE_MARGIN {
                    continue;
                }
                let (r, c) = region_of(u, v);
                let text = if abs_form {
                    format!("pass me the {} that is to the {} {} of the workspace", k.category, ROWS[r], COLS[c])
                } else {
                    format!("grasp me the {} {} {}", ROWS[r], COLS[c], k.category)
                };
                (
                    text,
                    Query {
                        category: Some(k.category.to_owned()),
                        region: Some((r, c)),
                        ..Query::default()
                    },
                )
            }
            TemplateClass::Rel => {
                let mut found = None;
                let mut refs: Vec<usize> = (0..scene.objects.len()).filter(|&r| r != t).collect();
                refs.shuffle(rng);
                for r in refs {
                    let ro = &scene.objects[r];
                    let (a, b) = (ro.centroid(), o.centroid());
                    if (a.0 - b.0).hypot(a.1 - b.1) < REFERENCE_MIN_DIST
                        || sector_edge_distance(a, b) < SECTOR_EDGE_MARGIN_DEG
                    {
                        continue;
                    }
                    let rk = ro.kind();
                    let q = Query {
                        category: Some(k.category.to_owned()),
                        relation: Some((sector_of(a, b), rk.color, rk.category.to_owned())),
                        ..Query::default()
                    };
                    if referents(scene, &q) == [t] {
                        let text = format!(
                            "{verb} the {} {} the {} {}",
                            k.category,
                            RELATIONS[sector_of(a, b)],
                            rk.color.name(),
                            rk.category
                        );
                        found = Some((text, q));
                        break;
                    }
                }
                match found {
                    Some(f) => f,
                    None => continue,
                }
            }
        };
        if referents(scene, &q) == [t] {
            return Ok(Expression { text, class, target: t });
        }
    }
    Err(SynthError::Generation(format!(
        "no object in this {}-object scene has a unique {} description",
        scene.objects.len(),
        class.as_str()
    )))
}

fn take_phrase<'a>(toks: &'a [String], phrase: &str) -> Option<&'a [String]> {
    let p = normalize(phrase);
    (toks.len() >= p.len() && toks[..p.len()] == p[..]).then(|| &toks[p.len()..])
}

fn take_any<'a, T: Copy>(toks: &'a [String], options: &[(T, &str)]) -> Option<(T, &'a [String])> {
    // longest phrase first so multi-word entries win
    let mut opts: Vec<&(T, &str)> = options.iter().collect();
    opts.sort_by_key(|o| std::cmp::Reverse(normalize(o.1).len()));
    opts.into_iter()
        .find_map(|(v, p)| take_phrase(toks, p).map(|rest| (*v, rest)))
}

fn colors() -> Vec<(Color, &'static str)> {
    Color::ALL.iter().map(|&c| (c, c.name())).collect()
}

fn take_category(toks: &[String]) -> Option<(String, &[String])> {
    let cats: Vec<(&str, &str)> = categories().into_iter().map(|c| (c, c)).collect();
    take_any(toks, &cats).map(|(c, r)| (c.to_owned(), r))
}

fn take_region(toks: &[String]) -> Option<((usize, usize), &[String])> {
    let rows: Vec<(usize, &str)> = ROWS.iter().copied().enumerate().collect();
    let cols: Vec<(usize, &str)> = COLS.iter().copied().enumerate().collect();
    let (r, rest) = take_any(toks, &rows)?;
    let (c, rest) = take_any(rest, &cols)?;
    Some(((r, c), rest))
}

/// Parses a generated sentence back into its constraints.
pub fn parse(text: &str) -> Result<(TemplateClass, Query)> {
    let toks = normalize(text);
    let fail = || SynthError::Input(format!("sentence does not fit the grammar: {text:?}"));
    let done = |rest: &[String]| rest.is_empty();

    // absolute, first form
    if let Some(rest) = take_phrase(&toks, "pass me the") {
        if let Some((cat, rest)) = take_category(rest) {
            if let Some(rest) = take_phrase(rest, "that is to the") {
                if let Some((region, rest)) = take_region(rest) {
                    if take_phrase(rest, "of the workspace").is_some_and(done) {
                        let q = Query {
                            category: Some(cat),
                            region: Some(region),
                            ..Query::default()
                        };
                        return Ok((TemplateClass::Abs, q));
                    }
                }
            }
        }
    }
    // absolute, second form
    if let Some(rest) = take_phrase(&toks, "grasp me the") {
        if let Some((region, rest)) = take_region(rest) {
            if let Some((cat, rest)) = take_category(rest) {
                if done(rest) {
                    let q = Query {
                        category: Some(cat),
                        region: Some(region),
                        ..Query::default()
                    };
                    return Ok((TemplateClass::Abs, q));
                }
            }
        }
    }
    let verbs: Vec<((), &str)> = VERBS.iter().map(|&v| ((), v)).collect();
    let ((), rest) = take_any(&toks, &verbs).ok_or_else(fail)?;
    let rest = take_phrase(rest, "the").ok_or_else(fail)?;

    // relative; "orange" is both a color and a category, so only commit once
    // a relation phrase follows the category
    let rels: Vec<(usize, &str)> = RELATIONS.iter().copied().enumerate().collect();
    if let Some((cat, (sector, after))) =
        take_category(rest).and_then(|(cat, after)| take_any(after, &rels).map(|r| (cat, r)))
    {
        let after = take_phrase(after, "the").ok_or_else(fail)?;
        let (color, after) = take_any(after, &colors()).ok_or_else(fail)?;
        let (rcat, after) = take_category(after).ok_or_else(fail)?;
        if !done(after) {
            return Err(fail());
        }
        let q = Query {
            category: Some(cat),
            relation: Some((sector, color, rcat)),
            ..Query::default()
        };
        return Ok((TemplateClass::Rel, q));
    }
    // attributes
    let (color, rest) = take_any(rest, &colors()).ok_or_else(fail)?;
    let nouns: Vec<(Shape, &str)> = Shape::ALL.iter().map(|&s| (s, s.noun())).collect();
    if let Some((shape, r)) = take_any(rest, &nouns) {
        if done(r) {
            let q = Query {
                color: Some(color),
                shape: Some(shape),
                ..Query::default()
            };
            return Ok((TemplateClass::AttrBase, q));
        }
    }
    let adjs: Vec<(Shape, &str)> = Shape::ALL.iter().map(|&s| (s, s.adjective())).collect();
    let (shape, rest) = take_any(rest, &adjs).ok_or_else(fail)?;
    let (cat, rest) = take_category(rest).ok_or_else(fail)?;
    if !done(rest) {
        return Err(fail());
    }
    Ok((
        TemplateClass::AttrCls,
        Query {
            color: Some(color),
            shape: Some(shape),
            category: Some(cat),
            ..Query::default()
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absolute_examples_parse() {
        let (c, q) = parse("pass me the banana that is to the middle right of the workspace").unwrap();
        assert_eq!(c, TemplateClass::Abs);
        assert_eq!(q.category.as_deref(), Some("banana"));
        assert_eq!(q.region, Some((1, 2)));
        let (c, q) = parse("grasp me the bottom center dice").unwrap();
        assert_eq!(c, TemplateClass::Abs);
        assert_eq!(q.region, Some((2, 1)));
        assert_eq!(q.category.as_deref(), Some("dice"));
    }

    #[test]
    fn sectors_follow_screen_directions() {
        let c = (100.0, 100.0);
        assert_eq!(RELATIONS[sector_of(c, (150.0, 100.0))], "to the right of");
        assert_eq!(RELATIONS[sector_of(c, (100.0, 50.0))], "above");
        assert_eq!(RELATIONS[sector_of(c, (60.0, 140.0))], "to the lower left of");
        assert_eq!(RELATIONS[sector_of(c, (100.0, 150.0))], "below");
    }

    #[test]
    fn regions_split_workspace_in_thirds() {
        assert_eq!(region_of(10.0, 10.0), (0, 0));
        assert_eq!(region_of(400.0, 200.0), (1, 2));
        assert_eq!(region_of(208.0, 410.0), (2, 1));
    }

    #[test]
    fn unparseable_sentence_is_rejected() {
        assert!(parse("dance with the red square").is_err());
        assert!(parse("pick up the red square please").is_err());
    }
}
