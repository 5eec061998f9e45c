//! CSV writers. Floats use the shortest representation that parses back to
//! the same value, so identical inputs give identical bytes.

use std::fmt::Write;

use nalgebra::{DMatrix, DVector};

use crate::model::{DecentralizedStrategy, TimeGrid, Trajectory};

fn push_vec(line: &mut String, v: &DVector<f64>) {
    for x in v.iter() {
        let _ = write!(line, ",{x}");
    }
}

fn push_mat(line: &mut String, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let _ = write!(line, ",{}", m[(i, j)]);
        }
    }
}

fn vec_names(header: &mut String, prefix: &str, len: usize) {
    for c in 0..len {
        let _ = write!(header, ",{prefix}_{c}");
    }
}

fn mat_names(header: &mut String, prefix: &str, rows: usize, cols: usize) {
    for i in 0..rows {
        for j in 0..cols {
            let _ = write!(header, ",{prefix}_{i}_{j}");
        }
    }
}

/// Long-format trajectory table: one row per `(path_id, node)`.
///
/// Columns: `path_id,node,t`, the state `x_*`, then for each DM `i` its
/// observation `y{i}_*`, estimate `xhat{i}_*`, control `u{i}_*`, and finally
/// the increments `dw_*`, `db{i}_*` and innovations `innov{i}_*`.
pub fn trajectories_csv(trajectories: &[Trajectory]) -> String {
    let mut out = String::new();
    let Some(first) = trajectories.first() else {
        return out;
    };
    let agents = first.num_agents();
    let mut header = String::from("path_id,node,t");
    vec_names(&mut header, "x", first.states[0].len());
    for i in 0..agents {
        vec_names(&mut header, &format!("y{i}"), first.observations[i][0].len());
        vec_names(&mut header, &format!("xhat{i}"), first.estimates[i][0].len());
        vec_names(&mut header, &format!("u{i}"), first.controls[i][0].len());
    }
    vec_names(&mut header, "dw", first.state_noise[0].len());
    for i in 0..agents {
        vec_names(&mut header, &format!("db{i}"), first.observation_noise[i][0].len());
    }
    for i in 0..agents {
        vec_names(&mut header, &format!("innov{i}"), first.innovations[i][0].len());
    }
    out.push_str(&header);
    out.push('\n');
    for tr in trajectories {
        for k in 0..tr.len() {
            let mut line = format!("{},{k},{}", tr.path, tr.times[k]);
            push_vec(&mut line, &tr.states[k]);
            for i in 0..agents {
                push_vec(&mut line, &tr.observations[i][k]);
                push_vec(&mut line, &tr.estimates[i][k]);
                push_vec(&mut line, &tr.controls[i][k]);
            }
            push_vec(&mut line, &tr.state_noise[k]);
            for i in 0..agents {
                push_vec(&mut line, &tr.observation_noise[i][k]);
            }
            for i in 0..agents {
                push_vec(&mut line, &tr.innovations[i][k]);
            }
            out.push_str(&line);
            out.push('\n');
        }
    }
    out
}

/// DM `dm`'s law: `t`, the gain `gain_r_c` (row-major), the offset
/// `offset_*` and the joint mean control `ubar_*`.
pub fn strategy_csv(strategy: &DecentralizedStrategy, dm: usize, grid: &TimeGrid) -> String {
    let law = &strategy.laws[dm];
    let (rows, cols) = law.gains[0].shape();
    let mut out = String::from("node,t");
    mat_names(&mut out, "gain", rows, cols);
    vec_names(&mut out, "offset", law.offsets[0].len());
    vec_names(&mut out, "ubar", strategy.mean_controls[0].len());
    out.push('\n');
    for k in 0..grid.len() {
        let mut line = format!("{k},{}", grid.time(k));
        push_mat(&mut line, &law.gains[k]);
        push_vec(&mut line, &law.offsets[k]);
        push_vec(&mut line, &strategy.mean_controls[k]);
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// A tabulated matrix function: `node,t,{prefix}_r_c…`.
pub fn matrix_schedule_csv(prefix: &str, values: &[DMatrix<f64>], grid: &TimeGrid) -> String {
    let mut out = String::from("node,t");
    if let Some(first) = values.first() {
        mat_names(&mut out, prefix, first.nrows(), first.ncols());
    }
    out.push('\n');
    for (k, m) in values.iter().enumerate() {
        let mut line = format!("{k},{}", grid.time(k));
        push_mat(&mut line, m);
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// A tabulated vector function: `node,t,{prefix}_c…`.
pub fn vector_schedule_csv(prefix: &str, values: &[DVector<f64>], grid: &TimeGrid) -> String {
    let mut out = String::from("node,t");
    if let Some(first) = values.first() {
        vec_names(&mut out, prefix, first.len());
    }
    out.push('\n');
    for (k, v) in values.iter().enumerate() {
        let mut line = format!("{k},{}", grid.time(k));
        push_vec(&mut line, v);
        out.push_str(&line);
        out.push('\n');
    }
    out
}
