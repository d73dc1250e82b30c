//! Flag grammar: `--param re,im[;re,im...]`, `--box cx,cy:wxh[;cx,cy:wxh...]`
//! (half widths, parameter units) and `--pattern k0=2,n=1[,p=1][,index=0]`.

use biflab::bifgrid::{FieldKind, GridBox};
use biflab::family::FamilyDoc;
use biflab::misiurewicz::{ActivitySpec, Pattern};
use biflab::{MapFamily, Param};
use num_complex::Complex64 as C;

use crate::CliError;

fn bad(what: &str, s: &str) -> CliError {
    CliError::Validation(format!("cannot parse {what} {s:?}"))
}

fn number(s: &str, what: &str) -> Result<f64, CliError> {
    let v: f64 = s.trim().parse().map_err(|_| bad(what, s))?;
    if !v.is_finite() {
        return Err(bad(what, s));
    }
    Ok(v)
}

pub fn complex(s: &str) -> Result<C, CliError> {
    let (re, im) = s.split_once(',').ok_or_else(|| bad("complex number", s))?;
    Ok(C::new(number(re, "real part")?, number(im, "imaginary part")?))
}

pub fn param(s: &str) -> Result<Param, CliError> {
    s.split(';').map(complex).collect::<Result<Vec<_>, _>>().map(Param)
}

pub fn points(s: &str) -> Result<Vec<C>, CliError> {
    param(s).map(|p| p.0)
}

pub fn grid_box(s: &str) -> Result<GridBox, CliError> {
    let mut center = Vec::new();
    let mut half = Vec::new();
    for part in s.split(';') {
        let (c, wh) = part.split_once(':').ok_or_else(|| bad("box", s))?;
        let (w, h) = wh.split_once('x').ok_or_else(|| bad("box size", wh))?;
        let (w, h) = (number(w, "box width")?, number(h, "box height")?);
        if !(w > 0.0 && h > 0.0) {
            return Err(CliError::Validation(format!("box half widths must be positive in {s:?}")));
        }
        center.push(complex(c)?);
        half.push(C::new(w, h));
    }
    Ok(GridBox::new(center, half))
}

pub fn list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',').map(|x| number(x, "list entry")).collect()
}

/// `unicritical<d>`, `bh<d>` / `branner_hubbard<d>`, an inline JSON family
/// document, or `@path` to one.
pub fn family(s: &str) -> Result<(MapFamily, Option<Param>), CliError> {
    let doc = if let Some(path) = s.strip_prefix('@') {
        std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{path}: {e}")))?
    } else if s.trim_start().starts_with('{') {
        s.to_string()
    } else {
        let (kind, digits) = if let Some(d) = s.strip_prefix("unicritical") {
            ("unicritical", d)
        } else if let Some(d) = s.strip_prefix("branner_hubbard") {
            ("branner_hubbard", d)
        } else if let Some(d) = s.strip_prefix("bh") {
            ("branner_hubbard", d)
        } else {
            return Err(bad("family", s));
        };
        let degree: usize = digits.parse().map_err(|_| bad("family degree", s))?;
        format!(r#"{{"kind":"{kind}","degree":{degree}}}"#)
    };
    FamilyDoc::parse(&doc).map_err(|e| CliError::Validation(e.to_string()))
}

/// `L`, `G<j>` or `activity<j>`.
pub fn field(s: &str) -> Result<FieldKind, CliError> {
    if s == "L" {
        return Ok(FieldKind::Lyapunov);
    }
    let index = |d: &str| d.parse::<usize>().map_err(|_| bad("field", s));
    if let Some(d) = s.strip_prefix("activity") {
        return Ok(FieldKind::Activity(index(d)?));
    }
    if let Some(d) = s.strip_prefix('G') {
        return Ok(FieldKind::Green(index(d)?));
    }
    Err(bad("field", s))
}

/// One `--pattern` per tracked critical point; all must share `k0`.
pub fn patterns(items: &[String]) -> Result<ActivitySpec, CliError> {
    if items.is_empty() {
        return Err(CliError::Validation("at least one --pattern is required".into()));
    }
    let mut spec = ActivitySpec { tracked: Vec::new(), k0: 0, patterns: Vec::new(), free: None };
    for (slot, item) in items.iter().enumerate() {
        let (mut k0, mut n, mut p, mut index) = (None, None, None, slot);
        for kv in item.split(',') {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad("pattern", item))?;
            let v: usize = v.trim().parse().map_err(|_| bad("pattern value", kv))?;
            match k.trim() {
                "k0" => k0 = Some(v),
                "n" => n = Some(v),
                "p" => p = Some(v),
                "index" => index = v,
                _ => return Err(bad("pattern key", k)),
            }
        }
        let k0 = k0.ok_or_else(|| CliError::Validation(format!("pattern {item:?} lacks k0")))?;
        let n = n.ok_or_else(|| CliError::Validation(format!("pattern {item:?} lacks n")))?;
        if slot > 0 && k0 != spec.k0 {
            return Err(CliError::Validation("all patterns must share k0".into()));
        }
        spec.k0 = k0;
        spec.tracked.push(index);
        spec.patterns.push(Pattern::Preperiodic { n, p });
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_and_param() {
        let b = grid_box("-0.5,0:2.25x2").unwrap();
        assert_eq!(b.center, vec![C::new(-0.5, 0.0)]);
        assert_eq!(b.half_width, vec![C::new(2.25, 2.0)]);
        let b = grid_box("0,0:1x1;1,-1:0.5x0.25").unwrap();
        assert_eq!(b.dim(), 2);
        assert_eq!(param("1,2;3,-4").unwrap().0, vec![C::new(1., 2.), C::new(3., -4.)]);
        assert!(grid_box("0,0:1").is_err());
        assert!(grid_box("0,0:-1x1").is_err());
        assert!(param("1").is_err());
    }

    #[test]
    fn families_and_fields() {
        assert_eq!(family("unicritical2").unwrap().0, MapFamily::unicritical(2).unwrap());
        assert_eq!(family("bh3").unwrap().0, MapFamily::branner_hubbard(3).unwrap());
        assert!(family("quartic").is_err());
        assert_eq!(field("G1").unwrap(), FieldKind::Green(1));
        assert_eq!(field("activity0").unwrap(), FieldKind::Activity(0));
        assert!(field("H").is_err());
    }

    #[test]
    fn pattern_grammar() {
        let s = patterns(&["k0=2,n=1,p=1".to_string()]).unwrap();
        assert_eq!((s.k0, s.tracked.clone()), (2, vec![0]));
        assert_eq!(s.patterns[0], Pattern::Preperiodic { n: 1, p: Some(1) });
        assert!(patterns(&["k0=2,n=1".into(), "k0=1,n=1".into()]).is_err());
        assert!(patterns(&["n=1".into()]).is_err());
    }
}
