//! The textual wire contract between the grounding model and the pipeline.
//!
//! One response encodes a pointer action plus the target's bounding box:
//!
//! ```text
//! pyautogui.click(x=120, y=45), <|box_start|>(100,30),(140,60)<|box_end|>
//! ```
//!
//! `pyautogui`, `<|box_start|>`, and `<|box_end|>` are literal byte
//! sequences, matched exactly and case-sensitively. The all-zero action
//! (point `(0,0)`, box `((0,0),(0,0))`) is the null action signaling an
//! infeasible task.
//!
//! Two parse modes exist: [`ParseMode::Lenient`] tolerates surrounding
//! whitespace, one pair of enclosing backticks, whitespace variation around
//! commas and equals signs, fractional coordinates (rounded half-up), and
//! swapped box corners (normalized). [`ParseMode::Strict`] accepts the
//! canonical form only, exactly as [`serialize`] emits it; it backs the
//! format rewards so training pushes the model toward canonical output.

use alloc::format;
use alloc::string::{String, ToString};
use core::fmt;

use crate::geometry::{PixelBox, PixelPoint};

/// Pointer verb of a grounding action. Both verbs target the same
/// coordinate and are treated identically for grounding purposes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Verb {
    Click,
    MoveTo,
}

impl Verb {
    pub const fn as_str(&self) -> &'static str {
        match self {
            Verb::Click => "click",
            Verb::MoveTo => "moveTo",
        }
    }
}

/// One parsed model response: verb, click-point, bounding box, and the raw
/// text it came from.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroundingAction {
    pub verb: Verb,
    pub point: PixelPoint,
    pub bbox: PixelBox,
    pub raw_text: String,
}

impl GroundingAction {
    /// The null action: point `(0,0)` and box `((0,0),(0,0))`.
    pub fn null() -> Self {
        GroundingAction {
            verb: Verb::Click,
            point: PixelPoint::ORIGIN,
            bbox: PixelBox::ZERO,
            raw_text: String::new(),
        }
    }

    /// True iff both the point and the box are all-zero.
    pub fn is_null(&self) -> bool {
        self.point.is_zero() && self.bbox.is_zero()
    }
}

/// First grammar violation encountered left-to-right.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FormatErrorKind {
    MissingClick,
    BadCoordinates,
    MissingBox,
    BadBox,
    TrailingGarbage,
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FormatError {
    pub kind: FormatErrorKind,
    pub detail: String,
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.detail)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParseMode {
    /// Canonical form only: no backticks, exact spacing, integer
    /// coordinates, ordered box corners.
    Strict,
    /// Inference-side tolerances: enclosing backticks, whitespace
    /// variation, fractional coordinates, swapped corners.
    Lenient,
}

struct Scanner<'a> {
    bytes: &'a [u8],
    pos: usize,
    lenient: bool,
}

impl<'a> Scanner<'a> {
    fn new(text: &'a str, lenient: bool) -> Self {
        Scanner {
            bytes: text.as_bytes(),
            pos: 0,
            lenient,
        }
    }

    fn skip_ws(&mut self) {
        if self.lenient {
            while self
                .bytes
                .get(self.pos)
                .is_some_and(|b| b.is_ascii_whitespace())
            {
                self.pos += 1;
            }
        }
    }

    fn eat(&mut self, lit: &str) -> bool {
        if self.bytes[self.pos..].starts_with(lit.as_bytes()) {
            self.pos += lit.len();
            true
        } else {
            false
        }
    }

    /// Non-negative decimal number. Lenient mode accepts a fractional part
    /// and rounds half-up; strict mode accepts digits only.
    fn number(&mut self) -> Option<u32> {
        let start = self.pos;
        let mut value: u64 = 0;
        while let Some(d) = self.bytes.get(self.pos).filter(|b| b.is_ascii_digit()) {
            value = value.checked_mul(10)?.checked_add((d - b'0') as u64)?;
            self.pos += 1;
        }
        if self.pos == start {
            return None;
        }
        if self.lenient && self.bytes.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            let frac_start = self.pos;
            while self
                .bytes
                .get(self.pos)
                .is_some_and(|b| b.is_ascii_digit())
            {
                self.pos += 1;
            }
            if self.pos == frac_start {
                return None;
            }
            if self.bytes[frac_start] >= b'5' {
                value += 1;
            }
        }
        u32::try_from(value).ok()
    }

    fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }

    fn rest(&self) -> &'a str {
        core::str::from_utf8(&self.bytes[self.pos..]).unwrap_or("")
    }
}

fn err(kind: FormatErrorKind, detail: impl Into<String>) -> FormatError {
    FormatError {
        kind,
        detail: detail.into(),
    }
}

/// Parses one model response into a [`GroundingAction`].
///
/// Parsing is total: every input yields exactly one action or one
/// [`FormatError`] naming the first violation.
pub fn parse_grounding_output(text: &str, mode: ParseMode) -> Result<GroundingAction, FormatError> {
    let lenient = mode == ParseMode::Lenient;
    let body = if lenient {
        let t = text.trim();
        // One pair of enclosing backticks is tolerated (the prompt displays
        // the answer format inside backticks).
        if t.len() >= 2 && t.starts_with('`') && t.ends_with('`') {
            t[1..t.len() - 1].trim()
        } else {
            t
        }
    } else {
        text
    };

    let mut sc = Scanner::new(body, lenient);

    if !sc.eat("pyautogui.") {
        return Err(err(
            FormatErrorKind::MissingClick,
            "expected literal `pyautogui.`",
        ));
    }
    let verb = if sc.eat("click") {
        Verb::Click
    } else if sc.eat("moveTo") {
        Verb::MoveTo
    } else {
        return Err(err(
            FormatErrorKind::MissingClick,
            format!("unsupported verb at `{}`", truncate(sc.rest())),
        ));
    };

    let point = parse_point_args(&mut sc)?;

    // Separator between the click segment and the box segment.
    if lenient {
        sc.skip_ws();
        sc.eat(",");
        sc.skip_ws();
    } else if !sc.eat(", ") {
        return Err(err(
            FormatErrorKind::MissingBox,
            "expected `, ` before box segment",
        ));
    }
    if !sc.eat("<|box_start|>") {
        return Err(err(
            FormatErrorKind::MissingBox,
            "expected literal `<|box_start|>`",
        ));
    }

    let bbox = parse_box_body(&mut sc, mode)?;

    sc.skip_ws();
    if !sc.at_end() {
        return Err(err(
            FormatErrorKind::TrailingGarbage,
            format!("unexpected trailing text `{}`", truncate(sc.rest())),
        ));
    }

    Ok(GroundingAction {
        verb,
        point,
        bbox,
        raw_text: text.to_string(),
    })
}

fn parse_point_args(sc: &mut Scanner<'_>) -> Result<PixelPoint, FormatError> {
    let bad = |d: &str| err(FormatErrorKind::BadCoordinates, d.to_string());
    if !sc.eat("(") {
        return Err(bad("expected `(` after verb"));
    }
    sc.skip_ws();
    if !sc.eat("x") {
        return Err(bad("expected `x`"));
    }
    sc.skip_ws();
    if !sc.eat("=") {
        return Err(bad("expected `=` after `x`"));
    }
    sc.skip_ws();
    let x = sc.number().ok_or_else(|| bad("invalid x coordinate"))?;
    sc.skip_ws();
    if !sc.eat(",") {
        return Err(bad("expected `,` between coordinates"));
    }
    if sc.lenient {
        sc.skip_ws();
    } else if !sc.eat(" ") {
        return Err(bad("expected single space after `,`"));
    }
    if !sc.eat("y") {
        return Err(bad("expected `y`"));
    }
    sc.skip_ws();
    if !sc.eat("=") {
        return Err(bad("expected `=` after `y`"));
    }
    sc.skip_ws();
    let y = sc.number().ok_or_else(|| bad("invalid y coordinate"))?;
    sc.skip_ws();
    if !sc.eat(")") {
        return Err(bad("expected `)` after coordinates"));
    }
    Ok(PixelPoint::new(x, y))
}

fn parse_box_body(sc: &mut Scanner<'_>, mode: ParseMode) -> Result<PixelBox, FormatError> {
    let bad = |d: &str| err(FormatErrorKind::BadBox, d.to_string());
    let corner = |sc: &mut Scanner<'_>| -> Result<(i64, i64), FormatError> {
        sc.skip_ws();
        if !sc.eat("(") {
            return Err(bad("expected `(` opening a corner"));
        }
        sc.skip_ws();
        let a = sc.number().ok_or_else(|| bad("invalid corner coordinate"))?;
        sc.skip_ws();
        if !sc.eat(",") {
            return Err(bad("expected `,` inside corner"));
        }
        sc.skip_ws();
        let b = sc.number().ok_or_else(|| bad("invalid corner coordinate"))?;
        sc.skip_ws();
        if !sc.eat(")") {
            return Err(bad("expected `)` closing a corner"));
        }
        Ok((a as i64, b as i64))
    };

    let (x1, y1) = corner(sc)?;
    sc.skip_ws();
    if !sc.eat(",") {
        return Err(bad("expected `,` between corners"));
    }
    let (x2, y2) = corner(sc)?;
    sc.skip_ws();
    if !sc.eat("<|box_end|>") {
        return Err(bad("expected literal `<|box_end|>`"));
    }
    match mode {
        ParseMode::Lenient => Ok(PixelBox::from_corners_normalized(x1, y1, x2, y2)),
        ParseMode::Strict => PixelBox::try_new(x1, y1, x2, y2)
            .map_err(|e| err(FormatErrorKind::BadBox, e.to_string())),
    }
}

/// Canonical emission; [`parse_grounding_output`] accepts its output in
/// both modes and round-trips it exactly.
pub fn serialize(action: &GroundingAction) -> String {
    format!(
        "pyautogui.{}(x={}, y={}), <|box_start|>({},{}),({},{})<|box_end|>",
        action.verb.as_str(),
        action.point.x,
        action.point.y,
        action.bbox.x1,
        action.bbox.y1,
        action.bbox.x2,
        action.bbox.y2,
    )
}

/// Strict parse of the click segment anchored at the start of `text`,
/// ignoring whatever follows it. Backs the click-point format reward.
pub fn strict_click_prefix(text: &str) -> Option<(Verb, PixelPoint)> {
    let mut sc = Scanner::new(text, false);
    if !sc.eat("pyautogui.") {
        return None;
    }
    let verb = if sc.eat("click") {
        Verb::Click
    } else if sc.eat("moveTo") {
        Verb::MoveTo
    } else {
        return None;
    };
    let point = parse_point_args(&mut sc).ok()?;
    Some((verb, point))
}

/// Strict parse of the box segment: the first `<|box_start|>` must be
/// followed by exactly `(x1,y1),(x2,y2)<|box_end|>` ending the text, with
/// ordered corners. Backs the bounding-box format reward.
pub fn strict_box_suffix(text: &str) -> Option<PixelBox> {
    let start = text.find("<|box_start|>")?;
    let mut sc = Scanner::new(&text[start + "<|box_start|>".len()..], false);
    let bbox = parse_box_body(&mut sc, ParseMode::Strict).ok()?;
    if sc.at_end() {
        Some(bbox)
    } else {
        None
    }
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(32) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_null_action() {
        let a = parse_grounding_output(
            "pyautogui.click(x=0, y=0), <|box_start|>(0,0),(0,0)<|box_end|>",
            ParseMode::Lenient,
        )
        .unwrap();
        assert!(a.is_null());
        assert_eq!(a.verb, Verb::Click);
    }

    #[test]
    fn parses_plain_action() {
        let a = parse_grounding_output(
            "pyautogui.click(x=120, y=45), <|box_start|>(100,30),(140,60)<|box_end|>",
            ParseMode::Strict,
        )
        .unwrap();
        assert_eq!(a.point, PixelPoint::new(120, 45));
        assert_eq!(a.bbox, PixelBox::try_new(100, 30, 140, 60).unwrap());
    }

    #[test]
    fn prose_is_missing_click() {
        let e = parse_grounding_output("I think you should click the icon", ParseMode::Lenient)
            .unwrap_err();
        assert_eq!(e.kind, FormatErrorKind::MissingClick);
    }

    #[test]
    fn lenient_tolerances() {
        let a = parse_grounding_output(
            "  `pyautogui.moveTo( x = 12.5 ,y=3.4),  <|box_start|> ( 9 , 8 ) , ( 1 , 2 ) <|box_end|>`  ",
            ParseMode::Lenient,
        )
        .unwrap();
        assert_eq!(a.verb, Verb::MoveTo);
        // 12.5 rounds half-up to 13, 3.4 down to 3.
        assert_eq!(a.point, PixelPoint::new(13, 3));
        // Swapped corners normalized.
        assert_eq!(a.bbox, PixelBox::try_new(1, 2, 9, 8).unwrap());
    }

    #[test]
    fn strict_rejects_lenient_inputs() {
        for bad in [
            "`pyautogui.click(x=0, y=0), <|box_start|>(0,0),(0,0)<|box_end|>`",
            "pyautogui.click(x=0,y=0), <|box_start|>(0,0),(0,0)<|box_end|>",
            "pyautogui.click(x=0.5, y=0), <|box_start|>(0,0),(0,0)<|box_end|>",
            "pyautogui.click(x=0, y=0), <|box_start|>(5,0),(0,0)<|box_end|>",
            "pyautogui.click(x=0, y=0), <|box_start|>(0,0),(0,0)<|box_end|>\n",
        ] {
            assert!(parse_grounding_output(bad, ParseMode::Strict).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn first_violation_kinds() {
        let kind = |t: &str| parse_grounding_output(t, ParseMode::Lenient).unwrap_err().kind;
        assert_eq!(kind("pyautogui.click(x=, y=5)"), FormatErrorKind::BadCoordinates);
        assert_eq!(kind("pyautogui.click(x=1, y=5)"), FormatErrorKind::MissingBox);
        assert_eq!(
            kind("pyautogui.click(x=1, y=5), <|box_start|>(1,2),(3)<|box_end|>"),
            FormatErrorKind::BadBox
        );
        assert_eq!(
            kind("pyautogui.click(x=1, y=5), <|box_start|>(1,2),(3,4)<|box_end|> ok?"),
            FormatErrorKind::TrailingGarbage
        );
        assert_eq!(kind("pyautogui.scroll(x=1, y=5)"), FormatErrorKind::MissingClick);
    }

    #[test]
    fn serialize_examples() {
        assert_eq!(
            serialize(&GroundingAction::null()),
            "pyautogui.click(x=0, y=0), <|box_start|>(0,0),(0,0)<|box_end|>"
        );
        let a = GroundingAction {
            verb: Verb::Click,
            point: PixelPoint::new(7, 9),
            bbox: PixelBox::try_new(1, 2, 3, 4).unwrap(),
            raw_text: String::new(),
        };
        assert_eq!(
            serialize(&a),
            "pyautogui.click(x=7, y=9), <|box_start|>(1,2),(3,4)<|box_end|>"
        );
        let m = GroundingAction {
            verb: Verb::MoveTo,
            point: PixelPoint::new(5, 5),
            bbox: PixelBox::try_new(0, 0, 10, 10).unwrap(),
            raw_text: String::new(),
        };
        assert_eq!(
            serialize(&m),
            "pyautogui.moveTo(x=5, y=5), <|box_start|>(0,0),(10,10)<|box_end|>"
        );
    }

    #[test]
    fn null_requires_both_zero() {
        let mut a = GroundingAction::null();
        assert!(a.is_null());
        a.bbox = PixelBox::try_new(0, 0, 1, 1).unwrap();
        assert!(!a.is_null());
        a.bbox = PixelBox::ZERO;
        a.point = PixelPoint::new(1, 0);
        assert!(!a.is_null());
    }

    #[test]
    fn strict_segment_helpers() {
        let t = "pyautogui.click(x=7, y=9), <|box_start|>(1,2),(3,4)<|box_end|>";
        assert_eq!(strict_click_prefix(t), Some((Verb::Click, PixelPoint::new(7, 9))));
        assert_eq!(strict_box_suffix(t), Some(PixelBox::try_new(1, 2, 3, 4).unwrap()));
        assert!(strict_click_prefix("pyautogui.click(x=, y=5), ...").is_none());
        assert!(strict_box_suffix("<|box_start|>(1,2),(3)<|box_end|>").is_none());
        assert!(strict_box_suffix("no box here").is_none());
    }
}
