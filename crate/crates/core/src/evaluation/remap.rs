use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::embedding::ClassEmbeddingTable;
use crate::scalar::{dot, norm, Scalar};
use crate::seeding::{rng_for, Stream};

use super::{EvalError, GroundTruthBox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Remap {
    /// `source → target` class names. Sources mapped to the same target are
    /// merged; unmapped classes keep their own name.
    Mapping(Vec<(String, String)>),
    /// Every embedding rotated towards a random orthogonal direction until
    /// its cosine with the original equals `cosine`.
    Synonym { cosine: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemappedTable<T> {
    pub table: ClassEmbeddingTable<T>,
    /// New class index of each original class.
    pub class_map: Vec<usize>,
}

pub fn remap_classes<T: Scalar>(table: &ClassEmbeddingTable<T>, remap: &Remap) -> Result<RemappedTable<T>, EvalError> {
    match remap {
        Remap::Mapping(pairs) => {
            let mut target_of: Vec<usize> = (0..table.len()).collect();
            for (src, dst) in pairs {
                let s = table.index_of(src).ok_or_else(|| EvalError::UnknownClass(src.clone()))?;
                let d = table.index_of(dst).ok_or_else(|| EvalError::UnknownClass(dst.clone()))?;
                target_of[s] = d;
            }
            // surviving classes keep their original order
            let mut kept: Vec<usize> = target_of.clone();
            kept.sort_unstable();
            kept.dedup();
            if kept.len() == table.len() {
                return Ok(RemappedTable {
                    table: table.clone(),
                    class_map: target_of,
                });
            }
            let names = kept.iter().map(|&c| table.name(c).to_string()).collect();
            let rows = kept.iter().map(|&c| table.row(c).to_vec()).collect();
            let class_map = target_of
                .iter()
                .map(|t| kept.binary_search(t).expect("target kept"))
                .collect();
            let table = ClassEmbeddingTable::new(names, rows).map_err(|e| EvalError::UnknownClass(e.to_string()))?;
            Ok(RemappedTable { table, class_map })
        }
        Remap::Synonym { cosine, seed } => {
            let c = T::lit(*cosine);
            let s = (T::one() - c * c).max(T::zero()).sqrt();
            let rows = (0..table.len())
                .map(|k| {
                    let z = table.row(k);
                    let mut rng = rng_for(*seed, Stream::Synonym, k as u64);
                    let u = loop {
                        let mut u: Vec<T> = (0..z.len())
                            .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
                            .collect();
                        for _ in 0..2 {
                            let p = dot(&u, z);
                            u.iter_mut().zip(z).for_each(|(x, &zk)| *x = *x - p * zk);
                        }
                        let n = norm(&u);
                        if n > T::lit(1e-6) {
                            break u.into_iter().map(|x| x / n).collect::<Vec<T>>();
                        }
                    };
                    z.iter().zip(&u).map(|(&a, &b)| c * a + s * b).collect()
                })
                .collect();
            let table = ClassEmbeddingTable::new(table.names().to_vec(), rows)
                .map_err(|e| EvalError::UnknownClass(e.to_string()))?;
            Ok(RemappedTable {
                class_map: (0..table.len()).collect(),
                table,
            })
        }
    }
}

/// Relabels ground truth through `class_map`.
pub fn remap_truth(truth: &[Vec<GroundTruthBox>], class_map: &[usize]) -> Vec<Vec<GroundTruthBox>> {
    truth
        .iter()
        .map(|frame| {
            frame
                .iter()
                .map(|g| GroundTruthBox {
                    class: class_map[g.class],
                    bbox: g.bbox,
                })
                .collect()
        })
        .collect()
}
