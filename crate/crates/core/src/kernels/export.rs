use std::io::Write;

use super::field::KernelField;
use crate::error::Result;

/// One row per node (and y-node for the y-dependent part):
/// `kind,component,region_id,x,xi,y,value`, with 1-based component indices
/// and an empty `y` for the matrix part.
pub fn write_kernel_csv<W: Write>(field: &KernelField, w: W, delimiter: u8) -> Result<()> {
    let mut out = csv::WriterBuilder::new().delimiter(delimiter).from_writer(w);
    out.write_record(["kind", "component", "region_id", "x", "xi", "y", "value"])?;
    let mesh = field.mesh();
    let (yname, mname) = field.kind().names();
    let kind = format!("{:?}", field.kind()).to_lowercase();
    let ys: Vec<String> = field.ygrid().nodes().map(|y| y.to_string()).collect();
    for c in 0..field.m() {
        let comp = format!("{yname}_{}", c + 1);
        let fam = field.y_family(c);
        for k in 0..mesh.len() {
            let (x, xi) = mesh.coords(k);
            let (p, xs, xis) = ((mesh.region(fam, k) + 1).to_string(), x.to_string(), xi.to_string());
            for (y, v) in ys.iter().zip(field.ydep_at(c, k)) {
                out.write_record([kind.as_str(), &comp, &p, &xs, &xis, y, &v.to_string()])?;
            }
        }
    }
    for i in 0..field.m() {
        for j in 0..field.m() {
            let comp = format!("{mname}_{}_{}", i + 1, j + 1);
            let fam = field.mat_family(i, j);
            for (k, v) in field.mat(i, j).iter().enumerate() {
                let (x, xi) = mesh.coords(k);
                out.write_record([
                    kind.as_str(),
                    &comp,
                    &(mesh.region(fam, k) + 1).to_string(),
                    &x.to_string(),
                    &xi.to_string(),
                    "",
                    &v.to_string(),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
