//! Template-grammar product titles with rule-derived short titles.
//!
//! A long title is built from a brand, marketing descriptors, a variant, a
//! product noun and a size. The short title keeps the variant and the noun in
//! their long-title order. Brands, variants, nouns, units and sizes are tied
//! to a category, so neighbouring tokens constrain each other.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::RawTitlePair;

struct Category {
    brands: &'static [&'static str],
    nouns: &'static [&'static str],
    variants: &'static [&'static str],
    units: &'static [&'static str],
    sizes: &'static [&'static str],
}

const CATEGORIES: &[Category] = &[
    Category {
        brands: &["Crunchy Acres", "Lay & Sons", "Golden Hills"],
        nouns: &["Potato Chips", "Tortilla Chips", "Kettle Chips", "Pretzels"],
        variants: &["Sea Salt", "Barbecue", "Sour Cream & Onion", "Jalapeno", "Cheddar", "Salt & Vinegar", "Ranch"],
        units: &["oz"],
        sizes: &["5", "7.5", "8", "10", "13"],
    },
    Category {
        brands: &["Polar Dairy", "Creamy Cow", "Sweet Scoop"],
        nouns: &["Ice Cream", "Frozen Yogurt", "Gelato"],
        variants: &["Vanilla", "Chocolate", "Strawberry", "Mint Chip", "Cookie Dough", "Butter Pecan"],
        units: &["qt", "pt"],
        sizes: &["1", "1.5", "2"],
    },
    Category {
        brands: &["Morning Peak", "Bean Street", "Roast & Co"],
        nouns: &["Ground Coffee", "Coffee Pods", "Whole Bean Coffee", "Cold Brew"],
        variants: &["Dark Roast", "Medium Roast", "French Roast", "Breakfast Blend", "Hazelnut", "Colombian"],
        units: &["oz", "ct"],
        sizes: &["12", "24", "32", "48"],
    },
    Category {
        brands: &["Sparkle Home", "Clean Wave", "Bright & Fresh"],
        nouns: &["All Purpose Cleaner", "Glass Cleaner", "Disinfecting Wipes", "Dish Soap"],
        variants: &["Lemon", "Lavender", "Fresh Scent", "Citrus", "Unscented", "Ocean Breeze"],
        units: &["fl oz", "ct"],
        sizes: &["16", "28", "75", "90"],
    },
    Category {
        brands: &["Happy Paws", "Pet Pantry", "Whisker & Tail"],
        nouns: &["Dry Dog Food", "Wet Cat Food", "Dog Treats", "Cat Litter"],
        variants: &["Chicken", "Salmon", "Beef", "Turkey & Rice", "Lamb", "Whitefish"],
        units: &["lb"],
        sizes: &["3", "5", "15", "30"],
    },
    Category {
        brands: &["Soft Cloud", "Northwood", "Comfy Home"],
        nouns: &["Paper Towels", "Toilet Paper", "Facial Tissues", "Napkins"],
        variants: &["Ultra Soft", "Extra Strong", "Select A Size", "Double Roll", "Mega Roll"],
        units: &["rolls", "ct"],
        sizes: &["6", "12", "18", "100"],
    },
    Category {
        brands: &["Sunny Fields", "Grain Valley", "Oat & Honey"],
        nouns: &["Cereal", "Granola", "Oatmeal", "Breakfast Bars"],
        variants: &["Honey Nut", "Cinnamon", "Blueberry", "Maple", "Apple", "Original"],
        units: &["oz", "ct"],
        sizes: &["10", "14", "18", "21"],
    },
    Category {
        brands: &["Orchard Gold", "Tropic Sun", "Fresh Squeeze"],
        nouns: &["Orange Juice", "Apple Juice", "Lemonade", "Sports Drink"],
        variants: &["Pink", "Tropical", "Berry", "Grape", "Calcium", "Mango"],
        units: &["fl oz", "gal"],
        sizes: &["52", "59", "64", "128"],
    },
    Category {
        brands: &["Silk & Shine", "Pure Botanics", "Daily Care"],
        nouns: &["Shampoo", "Conditioner", "Body Wash", "Hand Soap"],
        variants: &["Coconut", "Argan Oil", "Tea Tree", "Aloe", "Shea Butter", "Moisturizing"],
        units: &["fl oz"],
        sizes: &["12", "13.5", "22", "33.8"],
    },
    Category {
        brands: &["Nonna Rosa", "Villa Italia", "Garden Table"],
        nouns: &["Pasta Sauce", "Marinara", "Alfredo Sauce", "Salsa"],
        variants: &["Tomato Basil", "Garlic", "Four Cheese", "Mild", "Medium", "Roasted Pepper"],
        units: &["oz"],
        sizes: &["15", "16", "24", "45"],
    },
    Category {
        brands: &["Tuff Bag", "Hold Strong", "Eco & Easy"],
        nouns: &["Trash Bags", "Kitchen Bags", "Lawn Bags", "Storage Bags"],
        variants: &["Drawstring", "Flex", "Odor Control", "Heavy Duty", "Gallon", "Quart"],
        units: &["ct"],
        sizes: &["20", "40", "50", "90"],
    },
    Category {
        brands: &["Baker Bros", "Cookie Jar", "Crumb & Co"],
        nouns: &["Cookies", "Sandwich Cookies", "Crackers", "Wafers"],
        variants: &["Chocolate Chip", "Oatmeal Raisin", "Peanut Butter", "Double Chocolate", "Lemon", "Vanilla"],
        units: &["oz"],
        sizes: &["9", "11", "13", "18"],
    },
];

/// Marketing words that never make it into a short title.
const DESCRIPTORS: &[&str] = &[
    "Premium", "Family Size", "Value Pack", "Natural", "Organic", "New", "Classic", "Great Value",
    "Freshness Guaranteed", "Gluten Free", "Non-GMO", "Party Size", "Limited Edition", "Simply",
];

/// `count` long/short pairs drawn from the grammar.
pub fn generate_pairs(count: usize, seed: u64) -> Vec<RawTitlePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| generate_one(&mut rng)).collect()
}

fn descriptors(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(0..=2);
    let picked: Vec<&str> = DESCRIPTORS.choose_multiple(rng, n).copied().collect();
    picked.join(" ")
}

fn join(parts: &[&str]) -> String {
    parts.iter().filter(|p| !p.is_empty()).copied().collect::<Vec<_>>().join(" ")
}

fn generate_one(rng: &mut ChaCha8Rng) -> RawTitlePair {
    let cat = CATEGORIES.choose(rng).expect("categories");
    let brand = *cat.brands.choose(rng).expect("brands");
    let noun = *cat.nouns.choose(rng).expect("nouns");
    let variant = *cat.variants.choose(rng).expect("variants");
    let size = format!("{} {}", cat.sizes.choose(rng).expect("sizes"), cat.units.choose(rng).expect("units"));
    let desc = descriptors(rng);
    let pack = format!("Pack of {}", [2, 3, 4, 6, 12].choose(rng).expect("packs"));
    let (long, short) = match rng.random_range(0..5) {
        0 => (format!("{}, {size}", join(&[brand, &desc, variant, noun])), join(&[variant, noun])),
        1 => (format!("{}, {variant}, {size}", join(&[brand, &desc, noun])), join(&[noun, variant])),
        2 => (
            format!("{} {size}, {pack}", join(&[&desc, brand, variant, noun])),
            join(&[variant, noun]),
        ),
        3 => (format!("{} by {brand}, {size}", join(&[&desc, variant, noun])), join(&[variant, noun])),
        _ => (format!("{}, {size}", join(&[brand, &desc, noun])), noun.to_owned()),
    };
    RawTitlePair { long, short: Some(short) }
}
