//! Raster heat maps and bar charts written as PNG.
//!
//! Text uses a built-in 5x7 bitmap font (upper-case letters, digits and a
//! little punctuation; lower case is drawn as upper case). Output depends
//! only on the input values, so identical inputs give identical files.

use std::path::Path;

use crate::error::{Error, Result};

pub type Rgb = [u8; 3];

const WHITE: Rgb = [255, 255, 255];
const BLACK: Rgb = [0, 0, 0];
const GRAY: Rgb = [160, 160, 160];
const GLYPH_W: usize = 5;
const GLYPH_H: usize = 7;
const ADVANCE: usize = GLYPH_W + 1;

#[rustfmt::skip]
fn glyph(c: char) -> [u8; GLYPH_H] {
    match c.to_ascii_uppercase() {
        '0' => [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110],
        '1' => [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
        '2' => [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111],
        '3' => [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110],
        '4' => [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010],
        '5' => [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110],
        '6' => [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110],
        '7' => [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000],
        '8' => [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110],
        '9' => [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100],
        'A' => [0b01110, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001],
        'B' => [0b11110, 0b10001, 0b10001, 0b11110, 0b10001, 0b10001, 0b11110],
        'C' => [0b01110, 0b10001, 0b10000, 0b10000, 0b10000, 0b10001, 0b01110],
        'D' => [0b11100, 0b10010, 0b10001, 0b10001, 0b10001, 0b10010, 0b11100],
        'E' => [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b11111],
        'F' => [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b10000],
        'G' => [0b01110, 0b10001, 0b10000, 0b10111, 0b10001, 0b10001, 0b01111],
        'H' => [0b10001, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001],
        'I' => [0b01110, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
        'J' => [0b00111, 0b00010, 0b00010, 0b00010, 0b00010, 0b10010, 0b01100],
        'K' => [0b10001, 0b10010, 0b10100, 0b11000, 0b10100, 0b10010, 0b10001],
        'L' => [0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b11111],
        'M' => [0b10001, 0b11011, 0b10101, 0b10101, 0b10001, 0b10001, 0b10001],
        'N' => [0b10001, 0b10001, 0b11001, 0b10101, 0b10011, 0b10001, 0b10001],
        'O' => [0b01110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110],
        'P' => [0b11110, 0b10001, 0b10001, 0b11110, 0b10000, 0b10000, 0b10000],
        'Q' => [0b01110, 0b10001, 0b10001, 0b10001, 0b10101, 0b10010, 0b01101],
        'R' => [0b11110, 0b10001, 0b10001, 0b11110, 0b10100, 0b10010, 0b10001],
        'S' => [0b01111, 0b10000, 0b10000, 0b01110, 0b00001, 0b00001, 0b11110],
        'T' => [0b11111, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100],
        'U' => [0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110],
        'V' => [0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01010, 0b00100],
        'W' => [0b10001, 0b10001, 0b10001, 0b10101, 0b10101, 0b10101, 0b01010],
        'X' => [0b10001, 0b10001, 0b01010, 0b00100, 0b01010, 0b10001, 0b10001],
        'Y' => [0b10001, 0b10001, 0b01010, 0b00100, 0b00100, 0b00100, 0b00100],
        'Z' => [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b10000, 0b11111],
        '.' => [0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b01100, 0b01100],
        ',' => [0b00000, 0b00000, 0b00000, 0b00000, 0b01100, 0b00100, 0b01000],
        '-' => [0b00000, 0b00000, 0b00000, 0b11111, 0b00000, 0b00000, 0b00000],
        '_' => [0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b11111],
        ':' => [0b00000, 0b01100, 0b01100, 0b00000, 0b01100, 0b01100, 0b00000],
        '+' => [0b00000, 0b00100, 0b00100, 0b11111, 0b00100, 0b00100, 0b00000],
        '=' => [0b00000, 0b00000, 0b11111, 0b00000, 0b11111, 0b00000, 0b00000],
        '(' => [0b00010, 0b00100, 0b01000, 0b01000, 0b01000, 0b00100, 0b00010],
        ')' => [0b01000, 0b00100, 0b00010, 0b00010, 0b00010, 0b00100, 0b01000],
        '/' => [0b00000, 0b00001, 0b00010, 0b00100, 0b01000, 0b10000, 0b00000],
        '%' => [0b11000, 0b11001, 0b00010, 0b00100, 0b01000, 0b10011, 0b00011],
        ' ' => [0; GLYPH_H],
        _ => [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b00000, 0b00100],
    }
}

/// Pixel width of `text` at `scale`.
pub fn text_width(text: &str, scale: usize) -> usize {
    let n = text.chars().count();
    if n == 0 {
        0
    } else {
        (n * ADVANCE - 1) * scale
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pixels: Vec<Rgb>,
}

impl Canvas {
    pub fn new(width: usize, height: usize) -> Self {
        Canvas {
            width,
            height,
            pixels: vec![WHITE; width * height],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    pub fn fill_rect(&mut self, x: usize, y: usize, w: usize, h: usize, color: Rgb) {
        for yy in y..(y + h).min(self.height) {
            for xx in x..(x + w).min(self.width) {
                self.pixels[yy * self.width + xx] = color;
            }
        }
    }

    pub fn text(&mut self, x: usize, y: usize, text: &str, scale: usize, color: Rgb) {
        for (i, c) in text.chars().enumerate() {
            let g = glyph(c);
            let gx = x + i * ADVANCE * scale;
            for (row, bits) in g.iter().enumerate() {
                for col in 0..GLYPH_W {
                    if bits >> (GLYPH_W - 1 - col) & 1 == 1 {
                        self.fill_rect(gx + col * scale, y + row * scale, scale, scale, color);
                    }
                }
            }
        }
    }

    /// PNG bytes with `provenance` stored as text chunks.
    pub fn encode_png(&self, provenance: &[(String, String)]) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            for (k, v) in provenance {
                enc.add_text_chunk(k.clone(), v.clone())
                    .map_err(|e| Error::invalid(format!("png text chunk {k}: {e}")))?;
            }
            let mut w = enc
                .write_header()
                .map_err(|e| Error::invalid(format!("png header: {e}")))?;
            let data: Vec<u8> = self.pixels.iter().flatten().copied().collect();
            w.write_image_data(&data)
                .map_err(|e| Error::invalid(format!("png data: {e}")))?;
        }
        Ok(out)
    }

    pub fn save_png(&self, path: &Path, provenance: &[(String, String)]) -> Result<()> {
        let bytes = self.encode_png(provenance)?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

fn lerp(a: Rgb, b: Rgb, t: f64) -> Rgb {
    let mix = |x: u8, y: u8| (f64::from(x) + (f64::from(y) - f64::from(x)) * t).round() as u8;
    [mix(a[0], b[0]), mix(a[1], b[1]), mix(a[2], b[2])]
}

fn ramp(anchors: &[Rgb], t: f64) -> Rgb {
    let t = t.clamp(0.0, 1.0) * (anchors.len() - 1) as f64;
    let i = (t.floor() as usize).min(anchors.len() - 2);
    lerp(anchors[i], anchors[i + 1], t - i as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorScale {
    /// Dark purple (low) through green to yellow (high).
    Sequential,
    /// Blue (low), white (middle), red (high).
    Diverging,
}

impl ColorScale {
    pub fn color(self, t: f64) -> Rgb {
        match self {
            ColorScale::Sequential => ramp(
                &[[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]],
                t,
            ),
            ColorScale::Diverging => ramp(&[[59, 76, 192], [240, 240, 240], [180, 4, 38]], t),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Heatmap {
    pub title: String,
    /// `values[row][col]`; NaN cells are drawn gray.
    pub values: Vec<Vec<f64>>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    /// Values mapped to the ends of the color bar.
    pub range: (f64, f64),
    pub scale: ColorScale,
    pub y_axis: String,
    pub x_axis: String,
}

/// Layout facts of a rendered heat map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeatmapLayout {
    pub width: usize,
    pub height: usize,
    pub cell: usize,
    /// Every `tick_stride`-th row/column is labelled.
    pub tick_stride: usize,
    /// Tick labels are indices rather than names.
    pub abbreviated: bool,
}

const MARGIN: usize = 12;
const PLOT_SPAN: usize = 640;

impl Heatmap {
    pub fn render(&self) -> (Canvas, HeatmapLayout) {
        let rows = self.values.len();
        let cols = self.values.first().map_or(0, Vec::len);
        let n = rows.max(cols).max(1);
        let cell = (PLOT_SPAN / n).clamp(6, 64);

        let names_fit = self
            .col_labels
            .iter()
            .chain(&self.row_labels)
            .all(|l| text_width(l, 1) + 2 <= cell);
        let abbreviated = !names_fit;
        let ticks = |labels: &[String]| -> Vec<String> {
            if abbreviated {
                (0..labels.len()).map(|i| i.to_string()).collect()
            } else {
                labels.to_vec()
            }
        };
        let row_ticks = ticks(&self.row_labels);
        let col_ticks = ticks(&self.col_labels);
        let widest = col_ticks.iter().map(|t| text_width(t, 1)).max().unwrap_or(0);
        let tick_stride = if cell >= widest + 2 && cell > GLYPH_H {
            1
        } else {
            (widest + 2).max(GLYPH_H + 1).div_ceil(cell)
        };

        let row_label_w = row_ticks.iter().map(|t| text_width(t, 1)).max().unwrap_or(0);
        let left = MARGIN + GLYPH_H + 6 + row_label_w + 4;
        let top = MARGIN + 2 * (GLYPH_H + 6);
        let grid_w = cols * cell;
        let grid_h = rows * cell;
        let bar_x = left + grid_w + 16;
        let bar_w = 16;
        let legend_w = text_width(&format_tick(self.range.1), 1).max(text_width(&format_tick(self.range.0), 1));
        let width = bar_x + bar_w + 4 + legend_w + MARGIN;
        let height = top + grid_h + GLYPH_H + 6 + GLYPH_H + 6 + MARGIN;
        let mut cv = Canvas::new(width, height);

        cv.text(MARGIN, MARGIN, &self.title, 1, BLACK);
        let span = self.range.1 - self.range.0;
        let norm = |v: f64| if span > 0.0 { (v - self.range.0) / span } else { 0.5 };
        for (r, row) in self.values.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                let color = if v.is_nan() { GRAY } else { self.scale.color(norm(v)) };
                cv.fill_rect(left + c * cell, top + r * cell, cell, cell, color);
                if cell >= 30 && !v.is_nan() {
                    let label = format!("{v:.2}");
                    let t = norm(v);
                    let ink = if self.scale == ColorScale::Sequential && t < 0.6 { WHITE } else { BLACK };
                    let tw = text_width(&label, 1);
                    cv.text(left + c * cell + (cell - tw.min(cell)) / 2, top + r * cell + (cell - GLYPH_H) / 2, &label, 1, ink);
                }
            }
        }
        for (i, t) in col_ticks.iter().enumerate().step_by(tick_stride) {
            let tw = text_width(t, 1);
            let x = (left + i * cell + cell / 2).saturating_sub(tw / 2);
            cv.text(x, top + grid_h + 4, t, 1, BLACK);
        }
        for (i, t) in row_ticks.iter().enumerate().step_by(tick_stride) {
            let tw = text_width(t, 1);
            let y = top + i * cell + cell.saturating_sub(GLYPH_H) / 2;
            cv.text(left - 4 - tw, y, t, 1, BLACK);
        }
        let x_axis_w = text_width(&self.x_axis, 1);
        cv.text(
            (left + grid_w / 2).saturating_sub(x_axis_w / 2),
            top + grid_h + GLYPH_H + 10,
            &self.x_axis,
            1,
            BLACK,
        );
        // Axis name of the rows, written one character per line.
        for (i, ch) in self.y_axis.chars().enumerate() {
            let y = top + i * (GLYPH_H + 2);
            if y + GLYPH_H < height {
                cv.text(MARGIN, y, &ch.to_string(), 1, BLACK);
            }
        }
        for y in 0..grid_h {
            let t = 1.0 - y as f64 / (grid_h.max(2) - 1) as f64;
            cv.fill_rect(bar_x, top + y, bar_w, 1, self.scale.color(t));
        }
        cv.text(bar_x + bar_w + 4, top, &format_tick(self.range.1), 1, BLACK);
        cv.text(bar_x + bar_w + 4, (top + grid_h).saturating_sub(GLYPH_H), &format_tick(self.range.0), 1, BLACK);

        let layout = HeatmapLayout {
            width,
            height,
            cell,
            tick_stride,
            abbreviated,
        };
        (cv, layout)
    }
}

fn format_tick(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Horizontal bar chart, bars in the given order from the top.
#[derive(Debug, Clone)]
pub struct BarChart {
    pub title: String,
    pub labels: Vec<String>,
    pub values: Vec<f64>,
}

impl BarChart {
    pub fn render(&self) -> Canvas {
        let bar_h = 14;
        let gap = 4;
        let label_w = self.labels.iter().map(|l| text_width(l, 1)).max().unwrap_or(0);
        let left = MARGIN + label_w + 6;
        let plot_w = 360;
        let top = MARGIN + GLYPH_H + 10;
        let value_w = text_width("0.000000", 1);
        let width = left + plot_w + 6 + value_w + MARGIN;
        let height = top + self.values.len() * (bar_h + gap) + MARGIN;
        let mut cv = Canvas::new(width, height);
        cv.text(MARGIN, MARGIN, &self.title, 1, BLACK);
        let max = self.values.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
        for (i, (label, &v)) in self.labels.iter().zip(&self.values).enumerate() {
            let y = top + i * (bar_h + gap);
            cv.text(left - 6 - text_width(label, 1), y + (bar_h - GLYPH_H) / 2, label, 1, BLACK);
            let len = if max > 0.0 && v.is_finite() { (v / max * plot_w as f64).round() as usize } else { 0 };
            cv.fill_rect(left, y, len, bar_h, [31, 119, 180]);
            cv.text(left + len + 6, y + (bar_h - GLYPH_H) / 2, &format!("{v:.4}"), 1, BLACK);
        }
        cv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(n: usize) -> Heatmap {
        Heatmap {
            title: "confusion".into(),
            values: (0..n).map(|r| (0..n).map(|c| if r == c { 1.0 } else { 0.0 }).collect()).collect(),
            row_labels: (0..n).map(|i| format!("class_{i}")).collect(),
            col_labels: (0..n).map(|i| format!("class_{i}")).collect(),
            range: (0.0, 1.0),
            scale: ColorScale::Sequential,
            y_axis: "true".into(),
            x_axis: "predicted".into(),
        }
    }

    #[test]
    fn two_by_two_has_named_ticks() {
        let (cv, layout) = square(2).render();
        assert!(!layout.abbreviated);
        assert_eq!(layout.tick_stride, 1);
        assert_eq!((cv.width, cv.height), (layout.width, layout.height));
    }

    #[test]
    fn sixty_four_classes_abbreviate_without_collisions() {
        let (_, layout) = square(64).render();
        assert!(layout.abbreviated);
        let widest = text_width("63", 1);
        assert!(layout.cell * layout.tick_stride >= widest + 2);
        assert!(layout.width < 2000 && layout.height < 2000);
    }

    #[test]
    fn color_scale_ends() {
        assert_eq!(ColorScale::Sequential.color(0.0), [68, 1, 84]);
        assert_eq!(ColorScale::Sequential.color(1.0), [253, 231, 37]);
        assert_eq!(ColorScale::Diverging.color(0.5), [240, 240, 240]);
    }

    #[test]
    fn png_is_deterministic_and_decodes() {
        let (cv, _) = square(3).render();
        let prov = vec![("config_hash".to_string(), "abc".to_string())];
        let a = cv.encode_png(&prov).unwrap();
        assert_eq!(a, cv.encode_png(&prov).unwrap());
        let decoder = png::Decoder::new(std::io::Cursor::new(a));
        let reader = decoder.read_info().unwrap();
        let info = reader.info();
        assert_eq!(info.width as usize, cv.width);
        assert!(info.uncompressed_latin1_text.iter().any(|t| t.keyword == "config_hash" && t.text == "abc"));
    }

    #[test]
    fn text_draws_ink() {
        let mut cv = Canvas::new(20, 10);
        cv.text(1, 1, "1", 1, BLACK);
        assert_eq!(cv.pixel(3, 1), BLACK);
        assert_eq!(cv.pixel(0, 0), WHITE);
    }
}
