//! Small NetCDF-3 builder over the `netcdf3` crate, which only writes to paths.

#![allow(dead_code)]

use netcdf3::{DataSet, FileWriter, Version};

#[derive(Debug, Clone)]
pub enum Data {
    F64(Vec<f64>),
    F32(Vec<f32>),
    I32(Vec<i32>),
    I16(Vec<i16>),
}

#[derive(Debug, Clone)]
pub enum Attr {
    Text(String),
    F64(f64),
    F32(f32),
    I16(i16),
    F64s(Vec<f64>),
    I16s(Vec<i16>),
}

#[derive(Debug, Clone)]
pub struct Var {
    pub name: String,
    pub dims: Vec<String>,
    pub data: Data,
    pub attrs: Vec<(String, Attr)>,
}

impl Var {
    pub fn new(name: &str, dims: &[&str], data: Data) -> Self {
        Var {
            name: name.into(),
            dims: dims.iter().map(|d| d.to_string()).collect(),
            data,
            attrs: Vec::new(),
        }
    }

    pub fn attr(mut self, name: &str, value: Attr) -> Self {
        self.attrs.push((name.into(), value));
        self
    }

    pub fn text(self, name: &str, value: &str) -> Self {
        self.attr(name, Attr::Text(value.into()))
    }
}

/// Serializes a classic-format file with fixed dimensions.
pub fn build(dims: &[(&str, usize)], vars: &[Var], globals: &[(&str, &str)]) -> Vec<u8> {
    let mut ds = DataSet::new();
    for (name, len) in dims {
        ds.add_fixed_dim(*name, *len).unwrap();
    }
    for (k, v) in globals {
        ds.add_global_attr_string(k, v).unwrap();
    }
    for v in vars {
        let dims: Vec<&str> = v.dims.iter().map(String::as_str).collect();
        match v.data {
            Data::F64(_) => ds.add_var_f64(&v.name, &dims),
            Data::F32(_) => ds.add_var_f32(&v.name, &dims),
            Data::I32(_) => ds.add_var_i32(&v.name, &dims),
            Data::I16(_) => ds.add_var_i16(&v.name, &dims),
        }
        .unwrap();
        for (k, a) in &v.attrs {
            match a {
                Attr::Text(s) => ds.add_var_attr_string(&v.name, k, s),
                Attr::F64(x) => ds.add_var_attr_f64(&v.name, k, vec![*x]),
                Attr::F32(x) => ds.add_var_attr_f32(&v.name, k, vec![*x]),
                Attr::I16(x) => ds.add_var_attr_i16(&v.name, k, vec![*x]),
                Attr::F64s(x) => ds.add_var_attr_f64(&v.name, k, x.clone()),
                Attr::I16s(x) => ds.add_var_attr_i16(&v.name, k, x.clone()),
            }
            .unwrap();
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.nc");
    {
        let mut w = FileWriter::create_new(&path).unwrap();
        w.set_def(&ds, Version::Classic, 0).unwrap();
        for v in vars {
            match &v.data {
                Data::F64(d) => w.write_var_f64(&v.name, d),
                Data::F32(d) => w.write_var_f32(&v.name, d),
                Data::I32(d) => w.write_var_i32(&v.name, d),
                Data::I16(d) => w.write_var_i16(&v.name, d),
            }
            .unwrap();
        }
        w.close().unwrap();
    }
    std::fs::read(&path).unwrap()
}
