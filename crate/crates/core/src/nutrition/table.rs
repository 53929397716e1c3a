use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::NutritionError;
use crate::dataset::ClassRegistry;
use crate::detect::DishCounts;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dish {
    pub class_id: usize,
    pub name: String,
    /// Energy per detected serving.
    pub kcal: f64,
}

/// Per-dish energy values, keyed by class id.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct CalorieTable {
    dishes: BTreeMap<usize, Dish>,
}

impl CalorieTable {
    pub fn new(dishes: impl IntoIterator<Item = Dish>) -> Result<Self, NutritionError> {
        let mut map = BTreeMap::new();
        for dish in dishes {
            if !(dish.kcal.is_finite() && dish.kcal > 0.0) {
                return Err(NutritionError::InvalidCalories {
                    class_id: dish.class_id,
                    kcal: dish.kcal,
                });
            }
            let id = dish.class_id;
            if map.insert(id, dish).is_some() {
                return Err(NutritionError::DuplicateDish(id));
            }
        }
        Ok(Self { dishes: map })
    }

    /// Reads `class_id,name,kcal` rows with a header line.
    pub fn from_reader(reader: impl Read) -> Result<Self, NutritionError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let rows = rdr
            .deserialize::<Dish>()
            .map(|r| r.map_err(|e| NutritionError::Table(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(rows)
    }

    pub fn from_path(path: &Path) -> Result<Self, NutritionError> {
        let file = std::fs::File::open(path)
            .map_err(|e| NutritionError::Table(format!("{}: {e}", path.display())))?;
        Self::from_reader(file).map_err(|e| match e {
            NutritionError::Table(msg) => {
                NutritionError::Table(format!("{}: {msg}", path.display()))
            }
            other => other,
        })
    }

    pub fn get(&self, class_id: usize) -> Option<&Dish> {
        self.dishes.get(&class_id)
    }

    pub fn kcal(&self, class_id: usize) -> Result<f64, NutritionError> {
        self.get(class_id)
            .map(|d| d.kcal)
            .ok_or(NutritionError::MissingDishCalories(class_id))
    }

    pub fn dishes(&self) -> impl Iterator<Item = &Dish> {
        self.dishes.values()
    }

    pub fn len(&self) -> usize {
        self.dishes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dishes.is_empty()
    }

    /// Registry classes with no calorie entry.
    pub fn missing_classes(&self, registry: &ClassRegistry) -> Vec<usize> {
        (0..registry.len())
            .filter(|id| !self.dishes.contains_key(id))
            .collect()
    }
}

/// Total energy of a meal: sum of count times per-serving kcal.
pub fn estimate_meal_calories(
    counts: &DishCounts,
    table: &CalorieTable,
) -> Result<f64, NutritionError> {
    counts
        .iter()
        .map(|(&id, &n)| Ok(f64::from(n) * table.kcal(id)?))
        .sum()
}
