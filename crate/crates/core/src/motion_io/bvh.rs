//! Parser and forward kinematics for a subset of the BVH format.
//!
//! Supported: `ROOT`/`JOINT`/`End Site` blocks with `OFFSET` and `CHANNELS`
//! declaring 3 or 6 channels drawn from `{X,Y,Z}position` and
//! `{X,Y,Z}rotation` in any order. Rotations are in degrees and compose in the
//! declared channel order. Scale channels are rejected.

use std::fmt;

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    Xposition,
    Yposition,
    Zposition,
    Xrotation,
    Yrotation,
    Zrotation,
}

impl Channel {
    fn parse(token: &str) -> Option<Self> {
        Some(match token {
            "Xposition" => Channel::Xposition,
            "Yposition" => Channel::Yposition,
            "Zposition" => Channel::Zposition,
            "Xrotation" => Channel::Xrotation,
            "Yrotation" => Channel::Yrotation,
            "Zrotation" => Channel::Zrotation,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SourceJoint {
    pub name: String,
    pub parent: Option<usize>,
    pub offset: Vector3<f64>,
    pub channels: Vec<Channel>,
    pub end_site: Option<Vector3<f64>>,
}

/// Joint hierarchy, parents always precede children.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceSkeleton {
    pub joints: Vec<SourceJoint>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BvhMotion {
    pub skeleton: SourceSkeleton,
    pub frame_dt: f64,
    /// Per frame, all channel values in declaration order.
    pub frames: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BvhErrorKind {
    MissingSection(&'static str),
    UnbalancedBraces,
    ChannelCount { expected: usize, got: usize },
    FrameCount { declared: usize, found: usize },
    Unexpected { expected: String, found: String },
    BadNumber(String),
    UnsupportedChannel(String),
    NonFinite,
    BadFrameTime,
}

impl fmt::Display for BvhErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BvhErrorKind::MissingSection(s) => write!(f, "missing {s} section"),
            BvhErrorKind::UnbalancedBraces => write!(f, "unbalanced braces"),
            BvhErrorKind::ChannelCount { expected, got } => {
                write!(f, "channel count mismatch: expected {expected}, got {got}")
            }
            BvhErrorKind::FrameCount { declared, found } => {
                write!(f, "frame count mismatch: header declares {declared}, found {found}")
            }
            BvhErrorKind::Unexpected { expected, found } => {
                write!(f, "expected {expected}, found `{found}`")
            }
            BvhErrorKind::BadNumber(t) => write!(f, "invalid number `{t}`"),
            BvhErrorKind::UnsupportedChannel(t) => write!(f, "unsupported channel `{t}`"),
            BvhErrorKind::NonFinite => write!(f, "non-finite value"),
            BvhErrorKind::BadFrameTime => write!(f, "frame time must be positive"),
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
#[error("line {line}: {kind}")]
pub struct BvhError {
    pub line: usize,
    pub kind: BvhErrorKind,
}

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn peek(&self) -> Option<&'a str> {
        self.items.get(self.pos).map(|t| t.1)
    }

    fn line(&self) -> usize {
        self.items.get(self.pos).map_or(self.last_line, |t| t.0)
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        let t = self.items.get(self.pos).copied();
        self.pos += 1;
        t
    }

    fn err(&self, kind: BvhErrorKind) -> BvhError {
        BvhError {
            line: self.line(),
            kind,
        }
    }

    fn expect(&mut self, word: &str) -> Result<(), BvhError> {
        match self.next() {
            Some((_, t)) if t == word => Ok(()),
            Some((line, t)) => Err(BvhError {
                line,
                kind: if word == "}" || t == "}" || t == "{" {
                    BvhErrorKind::UnbalancedBraces
                } else {
                    BvhErrorKind::Unexpected {
                        expected: format!("`{word}`"),
                        found: t.to_string(),
                    }
                },
            }),
            None => Err(BvhError {
                line: self.last_line,
                kind: if word == "}" {
                    BvhErrorKind::UnbalancedBraces
                } else {
                    BvhErrorKind::Unexpected {
                        expected: format!("`{word}`"),
                        found: "end of file".into(),
                    }
                },
            }),
        }
    }

    fn name(&mut self) -> Result<String, BvhError> {
        match self.next() {
            Some((_, t)) if t != "{" && t != "}" => Ok(t.to_string()),
            Some((line, t)) => Err(BvhError {
                line,
                kind: BvhErrorKind::Unexpected {
                    expected: "a joint name".into(),
                    found: t.to_string(),
                },
            }),
            None => Err(self.err(BvhErrorKind::Unexpected {
                expected: "a joint name".into(),
                found: "end of file".into(),
            })),
        }
    }

    fn number(&mut self) -> Result<f64, BvhError> {
        let (line, t) = self.next().ok_or(BvhError {
            line: self.last_line,
            kind: BvhErrorKind::BadNumber("end of file".into()),
        })?;
        parse_number(t, line)
    }

    fn vector(&mut self) -> Result<Vector3<f64>, BvhError> {
        Ok(Vector3::new(self.number()?, self.number()?, self.number()?))
    }
}

fn parse_number(t: &str, line: usize) -> Result<f64, BvhError> {
    let v: f64 = t.parse().map_err(|_| BvhError {
        line,
        kind: BvhErrorKind::BadNumber(t.to_string()),
    })?;
    if !v.is_finite() {
        return Err(BvhError {
            line,
            kind: BvhErrorKind::NonFinite,
        });
    }
    Ok(v)
}

fn parse_joint(
    toks: &mut Tokens<'_>,
    parent: Option<usize>,
    joints: &mut Vec<SourceJoint>,
) -> Result<(), BvhError> {
    let name = toks.name()?;
    toks.expect("{")?;
    toks.expect("OFFSET")?;
    let offset = toks.vector()?;
    toks.expect("CHANNELS")?;
    let count_line = toks.line();
    let count = toks.number()?;
    if count != 3.0 && count != 6.0 {
        return Err(BvhError {
            line: count_line,
            kind: BvhErrorKind::ChannelCount {
                expected: 6,
                got: count as usize,
            },
        });
    }
    let mut channels = Vec::with_capacity(count as usize);
    for _ in 0..count as usize {
        let (line, t) = toks.next().ok_or(BvhError {
            line: toks.last_line,
            kind: BvhErrorKind::ChannelCount {
                expected: count as usize,
                got: channels.len(),
            },
        })?;
        let ch = Channel::parse(t).ok_or_else(|| BvhError {
            line,
            kind: if t.contains("scale") || t.contains("Scale") {
                BvhErrorKind::UnsupportedChannel(t.to_string())
            } else {
                BvhErrorKind::ChannelCount {
                    expected: count as usize,
                    got: channels.len(),
                }
            },
        })?;
        channels.push(ch);
    }
    let index = joints.len();
    joints.push(SourceJoint {
        name,
        parent,
        offset,
        channels,
        end_site: None,
    });
    loop {
        match toks.peek() {
            Some("JOINT") => {
                toks.next();
                parse_joint(toks, Some(index), joints)?;
            }
            Some("End") => {
                toks.next();
                toks.expect("Site")?;
                toks.expect("{")?;
                toks.expect("OFFSET")?;
                let v = toks.vector()?;
                toks.expect("}")?;
                joints[index].end_site = Some(v);
            }
            Some("}") => {
                toks.next();
                return Ok(());
            }
            Some("MOTION") | None => return Err(toks.err(BvhErrorKind::UnbalancedBraces)),
            Some(t) => {
                return Err(toks.err(BvhErrorKind::Unexpected {
                    expected: "JOINT, End Site or `}`".into(),
                    found: t.to_string(),
                }))
            }
        }
    }
}

/// Parse a BVH document. Errors carry 1-based line numbers.
pub fn parse_bvh(text: &str) -> Result<BvhMotion, BvhError> {
    let lines: Vec<&str> = text.lines().collect();
    let total_lines = lines.len().max(1);
    let motion_line = lines.iter().position(|l| l.trim() == "MOTION");
    let hierarchy_line = lines.iter().position(|l| l.trim() == "HIERARCHY");
    let Some(h) = hierarchy_line else {
        return Err(BvhError {
            line: 1,
            kind: BvhErrorKind::MissingSection("HIERARCHY"),
        });
    };
    let Some(m) = motion_line else {
        return Err(BvhError {
            line: total_lines,
            kind: BvhErrorKind::MissingSection("MOTION"),
        });
    };
    if m < h {
        return Err(BvhError {
            line: m + 1,
            kind: BvhErrorKind::MissingSection("HIERARCHY"),
        });
    }

    let items: Vec<(usize, &str)> = lines[h + 1..m]
        .iter()
        .enumerate()
        .flat_map(|(i, l)| l.split_whitespace().map(move |t| (h + 2 + i, t)))
        .collect();
    let mut toks = Tokens {
        items,
        pos: 0,
        last_line: m,
    };
    toks.expect("ROOT")?;
    let mut joints = Vec::new();
    parse_joint(&mut toks, None, &mut joints)?;
    if let Some(t) = toks.peek() {
        return Err(toks.err(if t == "}" {
            BvhErrorKind::UnbalancedBraces
        } else {
            BvhErrorKind::Unexpected {
                expected: "MOTION".into(),
                found: t.to_string(),
            }
        }));
    }
    let total_channels: usize = joints.iter().map(|j| j.channels.len()).sum();

    // MOTION section: "Frames: N", "Frame Time: dt", then one frame per line.
    let mut rest = lines[m + 1..]
        .iter()
        .enumerate()
        .map(|(i, l)| (m + 2 + i, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (fl, frames_line) = rest.next().ok_or(BvhError {
        line: m + 1,
        kind: BvhErrorKind::Unexpected {
            expected: "`Frames:`".into(),
            found: "end of file".into(),
        },
    })?;
    let declared = frames_line
        .strip_prefix("Frames:")
        .ok_or_else(|| BvhError {
            line: fl,
            kind: BvhErrorKind::Unexpected {
                expected: "`Frames:`".into(),
                found: frames_line.to_string(),
            },
        })?
        .trim();
    let declared: usize = declared.parse().map_err(|_| BvhError {
        line: fl,
        kind: BvhErrorKind::BadNumber(declared.to_string()),
    })?;
    let (tl, time_line) = rest.next().ok_or(BvhError {
        line: fl,
        kind: BvhErrorKind::Unexpected {
            expected: "`Frame Time:`".into(),
            found: "end of file".into(),
        },
    })?;
    let dt_text = time_line
        .strip_prefix("Frame Time:")
        .ok_or_else(|| BvhError {
            line: tl,
            kind: BvhErrorKind::Unexpected {
                expected: "`Frame Time:`".into(),
                found: time_line.to_string(),
            },
        })?
        .trim();
    let frame_dt = parse_number(dt_text, tl)?;
    if frame_dt <= 0.0 {
        return Err(BvhError {
            line: tl,
            kind: BvhErrorKind::BadFrameTime,
        });
    }

    let mut frames = Vec::with_capacity(declared);
    let mut last = tl;
    for (line, text) in rest {
        last = line;
        let values = text
            .split_whitespace()
            .map(|t| parse_number(t, line))
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != total_channels {
            return Err(BvhError {
                line,
                kind: BvhErrorKind::ChannelCount {
                    expected: total_channels,
                    got: values.len(),
                },
            });
        }
        frames.push(values);
    }
    if frames.len() != declared {
        return Err(BvhError {
            line: last,
            kind: BvhErrorKind::FrameCount {
                declared,
                found: frames.len(),
            },
        });
    }
    Ok(BvhMotion {
        skeleton: SourceSkeleton { joints },
        frame_dt,
        frames,
    })
}

impl SourceSkeleton {
    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn channel_count(&self) -> usize {
        self.joints.iter().map(|j| j.channels.len()).sum()
    }

    /// World transform of every joint for one frame of channel values.
    pub fn forward_kinematics(&self, values: &[f64]) -> Vec<Isometry3<f64>> {
        let mut out: Vec<Isometry3<f64>> = Vec::with_capacity(self.joints.len());
        let mut cursor = 0;
        for joint in &self.joints {
            let mut translation = joint.offset;
            let mut rotation = UnitQuaternion::identity();
            for ch in &joint.channels {
                let v = values[cursor];
                cursor += 1;
                match ch {
                    Channel::Xposition => translation.x += v,
                    Channel::Yposition => translation.y += v,
                    Channel::Zposition => translation.z += v,
                    Channel::Xrotation => {
                        rotation *= UnitQuaternion::from_axis_angle(&Vector3::x_axis(), v.to_radians())
                    }
                    Channel::Yrotation => {
                        rotation *= UnitQuaternion::from_axis_angle(&Vector3::y_axis(), v.to_radians())
                    }
                    Channel::Zrotation => {
                        rotation *= UnitQuaternion::from_axis_angle(&Vector3::z_axis(), v.to_radians())
                    }
                }
            }
            let local = Isometry3::from_parts(Translation3::from(translation), rotation);
            let world = match joint.parent {
                Some(p) => out[p] * local,
                None => local,
            };
            out.push(world);
        }
        out
    }
}
